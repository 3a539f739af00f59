//! Lattice spin systems with symmetric ground states: the q-state Potts model
//! and the hard-core lattice gas at high fugacity.

use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{Point, Region};

/// Spin system on a region. Spins are small integers: Potts colours `0..q`,
/// or hard-core occupancy `0/1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpinSystem {
    Potts { q: u8 },
    HardCore,
}

impl SpinSystem {
    pub fn potts(q: u8) -> Result<Self> {
        if !(2..=9).contains(&q) {
            return Err(Error::validation(format!("Potts q must be in 2..=9, got {q}")));
        }
        Ok(SpinSystem::Potts { q })
    }

    /// Number of spin values.
    pub fn alphabet(&self) -> u8 {
        match self {
            SpinSystem::Potts { q } => *q,
            SpinSystem::HardCore => 2,
        }
    }

    /// Ground-state labels: colours for Potts, 0 = even / 1 = odd for hard-core.
    pub fn ground_states(&self) -> Vec<u8> {
        match self {
            SpinSystem::Potts { q } => (0..*q).collect(),
            SpinSystem::HardCore => vec![0, 1],
        }
    }

    /// Spin of ground state `phi` at `p`.
    pub fn ground_spin(&self, phi: u8, p: &Point) -> u8 {
        match self {
            SpinSystem::Potts { .. } => phi,
            SpinSystem::HardCore => {
                let even = p.is_even();
                u8::from(even == (phi == 0))
            }
        }
    }

    /// Whether a spin vector on `region` is admissible (hard-core: independent).
    pub fn admissible(&self, edges: &[(usize, usize)], spins: &[u8]) -> bool {
        match self {
            SpinSystem::Potts { .. } => true,
            SpinSystem::HardCore => edges.iter().all(|&(a, b)| !(spins[a] == 1 && spins[b] == 1)),
        }
    }

    /// Exponent of z for a configuration: bichromatic edges (Potts) or
    /// |Λ^φ| − |I| (hard-core with ground state φ).
    pub fn energy(&self, region: &Region, edges: &[(usize, usize)], phi: u8, spins: &[u8]) -> i64 {
        match self {
            SpinSystem::Potts { .. } => edges.iter().filter(|&&(a, b)| spins[a] != spins[b]).count() as i64,
            SpinSystem::HardCore => {
                let ground = region.vertices().iter().filter(|p| self.ground_spin(phi, p) == 1).count() as i64;
                ground - spins.iter().filter(|&&s| s == 1).count() as i64
            }
        }
    }

    pub fn ground_name(&self, phi: u8) -> String {
        match self {
            SpinSystem::Potts { .. } => format!("{phi}"),
            SpinSystem::HardCore => if phi == 0 { "even" } else { "odd" }.to_string(),
        }
    }

    pub fn parse_ground(&self, s: &str) -> Result<u8> {
        match self {
            SpinSystem::HardCore => match s {
                "even" => Ok(0),
                "odd" => Ok(1),
                _ => Err(Error::validation(format!("hard-core boundary must be even or odd, got {s:?}"))),
            },
            SpinSystem::Potts { q } => {
                let named = ["red", "blue", "green", "yellow", "cyan", "magenta", "white", "black", "orange"];
                let v = named
                    .iter()
                    .position(|&n| n == s)
                    .map(|v| v as u8)
                    .or_else(|| s.parse::<u8>().ok())
                    .ok_or_else(|| Error::validation(format!("unknown Potts boundary colour {s:?}")))?;
                if v >= *q {
                    return Err(Error::validation(format!("boundary colour {v} not below q = {q}")));
                }
                Ok(v)
            }
        }
    }
}

impl fmt::Display for SpinSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpinSystem::Potts { q } => write!(f, "potts(q={q})"),
            SpinSystem::HardCore => write!(f, "hardcore"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardcore_ground_states_alternate() {
        let s = SpinSystem::HardCore;
        assert_eq!(s.ground_spin(0, &Point::new(&[0, 0])), 1);
        assert_eq!(s.ground_spin(0, &Point::new(&[1, 0])), 0);
        assert_eq!(s.ground_spin(1, &Point::new(&[1, 0])), 1);
    }

    #[test]
    fn boundary_names() {
        let p = SpinSystem::potts(3).unwrap();
        assert_eq!(p.parse_ground("red").unwrap(), 0);
        assert_eq!(p.parse_ground("2").unwrap(), 2);
        assert!(p.parse_ground("3").is_err());
        assert_eq!(SpinSystem::HardCore.parse_ground("odd").unwrap(), 1);
    }
}
