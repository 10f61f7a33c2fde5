//! Potential specifications on the command line.
//!
//! `zero`, `const:<c>`, `cos:<a>` (`a·cos(2πx)`), `random:<seed>:<amplitude>`
//! and `file:<path>` (a field record).

use std::f64::consts::PI;
use std::path::PathBuf;

use mabuchi::npc::random_potential;
use mabuchi::{Field, Grid};

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    Zero,
    Const(f64),
    Cos(f64),
    Random { seed: u64, amplitude: f64 },
    File(PathBuf),
}

impl std::str::FromStr for PotentialSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let number = |v: &str| -> Result<f64, String> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{v}` is not a finite number"))
        };
        let parts: Vec<&str> = s.splitn(2, ':').collect();
        match parts.as_slice() {
            ["zero"] => Ok(PotentialSpec::Zero),
            ["const", c] => Ok(PotentialSpec::Const(number(c)?)),
            ["cos", a] => Ok(PotentialSpec::Cos(number(a)?)),
            ["random", rest] => {
                let (seed, amp) = rest
                    .split_once(':')
                    .ok_or_else(|| "expected random:<seed>:<amplitude>".to_owned())?;
                let seed = seed.parse::<u64>().map_err(|_| format!("`{seed}` is not a seed"))?;
                let amplitude = number(amp)?;
                if amplitude < 0.0 {
                    return Err("amplitude must be non-negative".into());
                }
                Ok(PotentialSpec::Random { seed, amplitude })
            }
            ["file", path] if !path.is_empty() => Ok(PotentialSpec::File(PathBuf::from(path))),
            _ => Err(format!(
                "unknown potential `{s}` (expected zero, const:<c>, cos:<a>, random:<seed>:<amplitude> or file:<path>)"
            )),
        }
    }
}

impl PotentialSpec {
    /// Materializes the potential. Files are field records, or grid CSV when
    /// the name ends in `.csv`; either must match the grid size.
    pub fn build(&self, grid: Grid, max_wavenumber: usize) -> Result<Field, String> {
        Ok(match self {
            PotentialSpec::Zero => Field::zeros(grid),
            PotentialSpec::Const(c) => Field::constant(grid, *c),
            PotentialSpec::Cos(a) => Field::from_fn(grid, |x, _| a * (2.0 * PI * x).cos()),
            PotentialSpec::Random { seed, amplitude } => random_potential(grid, *seed, *amplitude, max_wavenumber),
            PotentialSpec::File(path) => {
                let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let parsed = if path.extension().is_some_and(|e| e == "csv") {
                    mabuchi::io::read_field_csv(&bytes[..])
                } else {
                    mabuchi::io::field_from_bytes(&bytes)
                };
                let f = parsed.map_err(|e| format!("{}: {e}", path.display()))?;
                if f.grid() != grid {
                    return Err(format!(
                        "{}: field has N = {}, config has N = {}",
                        path.display(),
                        f.grid().n(),
                        grid.n()
                    ));
                }
                f
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        assert_eq!("zero".parse(), Ok(PotentialSpec::Zero));
        assert_eq!("const:0.3".parse(), Ok(PotentialSpec::Const(0.3)));
        assert_eq!("cos:-1e-2".parse(), Ok(PotentialSpec::Cos(-1e-2)));
        assert_eq!(
            "random:7:0.002".parse(),
            Ok(PotentialSpec::Random {
                seed: 7,
                amplitude: 0.002
            })
        );
        assert_eq!("file:a/b.mnpl".parse(), Ok(PotentialSpec::File("a/b.mnpl".into())));
        for bad in ["", "const", "const:x", "cos:nan", "random:7", "random:-1:0.1", "random:1:-0.1", "file:", "sin:1"] {
            assert!(bad.parse::<PotentialSpec>().is_err(), "{bad} accepted");
        }
    }
}
