//! Rooted unlabelled trees in canonical level-sequence form.

/// Level sequences (root at level 1, preorder) of all rooted unlabelled trees
/// on `n` vertices, generated by the constant-amortised-time successor rule.
pub fn rooted_trees(n: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for_each_rooted_tree(n, |l| out.push(l.to_vec()));
    out
}

pub fn for_each_rooted_tree(n: usize, mut f: impl FnMut(&[u32])) {
    if n == 0 {
        return;
    }
    let mut l: Vec<u32> = (1..=n as u32).collect();
    loop {
        f(&l);
        // p: last position whose level is above 2; none left means the star
        let Some(p) = (1..n).rev().find(|&i| l[i] > 2) else {
            return;
        };
        let q = (0..p).rev().find(|&i| l[i] == l[p] - 1).expect("parent level exists");
        let shift = p - q;
        for i in p..n {
            l[i] = l[i - shift];
        }
    }
}

/// Parent indices for a level sequence; the root's parent is `usize::MAX`.
pub fn parents(levels: &[u32]) -> Vec<usize> {
    let mut last_at = vec![usize::MAX; levels.len() + 2];
    let mut out = Vec::with_capacity(levels.len());
    for (i, &lv) in levels.iter().enumerate() {
        out.push(if lv == 1 { usize::MAX } else { last_at[lv as usize - 1] });
        last_at[lv as usize] = i;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_known_sequence() {
        let expect = [1, 1, 2, 4, 9, 20, 48, 115, 286, 719];
        for (i, &c) in expect.iter().enumerate() {
            assert_eq!(rooted_trees(i + 1).len(), c, "n = {}", i + 1);
        }
    }

    #[test]
    fn parents_of_spider() {
        assert_eq!(parents(&[1, 2, 3, 2]), vec![usize::MAX, 0, 1, 0]);
    }
}
