//! Versioned text serialization for trained parameters.
//!
//! One file carries the policy, the dual coefficients, and (for the
//! unsupervised feature mode) the VAE. The format is line-oriented,
//! space-separated, full-decimal-precision text: floats print through
//! Rust's shortest-roundtrip formatter, so save -> load -> save is
//! byte-identical and equal-seed runs produce equal files.

use crate::features::VaeParams;
use crate::learner::{DualParams, PolicyParams};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

const FORMAT_HEADER: &str = "skillrep params v1";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported format version: got {got:?}, expected {expected:?}")]
    VersionMismatch { got: String, expected: &'static str },
    #[error("malformed params file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Everything the training loop learns, bundled for one artifact file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub policy: PolicyParams,
    pub duals: DualParams,
    pub vae: Option<VaeParams>,
}

fn push_floats(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(name);
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

pub fn params_to_string(params: &ParamsFile) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    let p = &params.policy;
    let _ = writeln!(
        out,
        "policy {} {} {}",
        p.skill_dim(),
        p.hidden(),
        p.exploration_noise
    );
    push_floats(&mut out, "theta", &p.flatten());
    let d = &params.duals;
    let (per_dim, lo, hi) = d.grid_shape();
    let _ = writeln!(
        out,
        "duals {} {} {} {} {}",
        d.skill_dim(),
        per_dim,
        lo,
        hi,
        u8::from(d.lambda1_enabled)
    );
    push_floats(&mut out, "coeff1", &d.coeff1);
    push_floats(&mut out, "coeff2", &d.coeff2);
    match &params.vae {
        None => out.push_str("vae 0\n"),
        Some(v) => {
            let _ = writeln!(out, "vae 1 {} {} {}", v.latent_dim(), v.hidden(), v.recon_scale);
            push_floats(&mut out, "weights", &v.flatten_trainable());
        }
    }
    out
}

pub fn save_params(params: &ParamsFile, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, params_to_string(params))?;
    Ok(())
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), PersistError> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| PersistError::Malformed {
                line: usize::MAX,
                reason: format!("unexpected end of file, expected {what}"),
            })
    }

    /// Line `tag v0 v1 ...` with exactly `n` whitespace-separated fields.
    fn tagged(&mut self, tag: &str, n: usize) -> Result<(usize, Vec<&'a str>), PersistError> {
        let (line, l) = self.next(tag)?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(tag) {
            return Err(PersistError::Malformed { line, reason: format!("expected {tag}") });
        }
        let fields: Vec<&str> = parts.collect();
        if fields.len() != n {
            return Err(PersistError::Malformed {
                line,
                reason: format!("{tag} needs {n} fields, got {}", fields.len()),
            });
        }
        Ok((line, fields))
    }

    fn floats(&mut self, tag: &str, n: usize) -> Result<Vec<f64>, PersistError> {
        let (line, fields) = self.tagged(tag, n)?;
        fields
            .iter()
            .map(|f| {
                let v: f64 = f.parse().map_err(|_| PersistError::Malformed {
                    line,
                    reason: format!("bad float in {tag}"),
                })?;
                if !v.is_finite() {
                    return Err(PersistError::Malformed {
                        line,
                        reason: format!("non-finite value in {tag}"),
                    });
                }
                Ok(v)
            })
            .collect()
    }
}

fn parse_usize(s: &str, line: usize, what: &str) -> Result<usize, PersistError> {
    s.parse().map_err(|_| PersistError::Malformed { line, reason: format!("bad {what}") })
}

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64, PersistError> {
    let v: f64 = s
        .parse()
        .map_err(|_| PersistError::Malformed { line, reason: format!("bad {what}") })?;
    if !v.is_finite() {
        return Err(PersistError::Malformed { line, reason: format!("non-finite {what}") });
    }
    Ok(v)
}

pub fn params_from_string(text: &str) -> Result<ParamsFile, PersistError> {
    let mut r = LineReader { lines: text.lines().enumerate() };
    let (_, header) = r.next("version header")?;
    if header != FORMAT_HEADER {
        return Err(PersistError::VersionMismatch {
            got: header.to_string(),
            expected: FORMAT_HEADER,
        });
    }

    let (line, f) = r.tagged("policy", 3)?;
    let skill_dim = parse_usize(f[0], line, "policy skill_dim")?;
    let hidden = parse_usize(f[1], line, "policy hidden")?;
    let noise = parse_f64(f[2], line, "policy exploration noise")?;
    if skill_dim == 0 || hidden == 0 {
        return Err(PersistError::Malformed { line, reason: "zero policy dimension".into() });
    }
    let shape = PolicyParams::zeros(skill_dim, hidden, noise);
    let theta = r.floats("theta", shape.flatten().len())?;
    let policy = shape.with_flat(&theta);

    let (line, f) = r.tagged("duals", 5)?;
    let d_dim = parse_usize(f[0], line, "duals skill_dim")?;
    let per_dim = parse_usize(f[1], line, "duals grid size")?;
    let lo = parse_f64(f[2], line, "duals grid lo")?;
    let hi = parse_f64(f[3], line, "duals grid hi")?;
    let enabled = match f[4] {
        "0" => false,
        "1" => true,
        _ => {
            return Err(PersistError::Malformed { line, reason: "bad lambda1 flag".into() });
        }
    };
    if d_dim != skill_dim {
        return Err(PersistError::Malformed {
            line,
            reason: format!("duals dimension {d_dim} does not match policy {skill_dim}"),
        });
    }
    if d_dim == 0 || per_dim < 2 || lo >= hi {
        return Err(PersistError::Malformed { line, reason: "bad dual grid shape".into() });
    }
    let mut duals = DualParams::grid(d_dim, per_dim, lo, hi);
    let n_anchors = duals.anchors().len();
    duals.coeff1 = r.floats("coeff1", n_anchors)?;
    duals.coeff2 = r.floats("coeff2", n_anchors)?;
    duals.lambda1_enabled = enabled;

    let (line, l) = r.next("vae marker")?;
    let mut parts = l.split_whitespace();
    if parts.next() != Some("vae") {
        return Err(PersistError::Malformed { line, reason: "expected vae".into() });
    }
    let vae = match parts.next() {
        Some("0") => {
            if parts.next().is_some() {
                return Err(PersistError::Malformed {
                    line,
                    reason: "trailing fields after vae 0".into(),
                });
            }
            None
        }
        Some("1") => {
            let f: Vec<&str> = parts.collect();
            if f.len() != 3 {
                return Err(PersistError::Malformed {
                    line,
                    reason: "vae 1 needs latent, hidden, recon_scale".into(),
                });
            }
            let latent = parse_usize(f[0], line, "vae latent_dim")?;
            let v_hidden = parse_usize(f[1], line, "vae hidden")?;
            let recon = parse_f64(f[2], line, "vae recon_scale")?;
            if latent == 0 || v_hidden == 0 || recon <= 0.0 {
                return Err(PersistError::Malformed { line, reason: "bad vae shape".into() });
            }
            if latent != skill_dim {
                return Err(PersistError::Malformed {
                    line,
                    reason: format!("vae latent {latent} does not match policy {skill_dim}"),
                });
            }
            let shape = VaeParams::zeros(latent, v_hidden, recon);
            let weights = r.floats("weights", shape.flatten_trainable().len())?;
            Some(shape.with_trainable(&weights))
        }
        _ => {
            return Err(PersistError::Malformed { line, reason: "bad vae marker".into() });
        }
    };

    if let Some((i, _)) = r.lines.next() {
        return Err(PersistError::Malformed { line: i + 1, reason: "trailing data".into() });
    }
    Ok(ParamsFile { policy, duals, vae })
}

pub fn load_params(path: &Path) -> Result<ParamsFile, PersistError> {
    params_from_string(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_params(with_vae: bool) -> ParamsFile {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let policy = PolicyParams::init(&mut rng, 2, 6, 0.1);
        let mut duals = DualParams::grid(2, 3, -2.0, 2.0);
        for (i, c) in duals.coeff1.iter_mut().enumerate() {
            *c = (i as f64).sin();
        }
        for (i, c) in duals.coeff2.iter_mut().enumerate() {
            *c = 1.0 / (i + 1) as f64;
        }
        let vae = with_vae.then(|| VaeParams::init(&mut rng, 2, 5, 1.0));
        ParamsFile { policy, duals, vae }
    }

    #[test]
    fn round_trip_is_lossless_and_byte_stable() {
        for with_vae in [false, true] {
            let params = sample_params(with_vae);
            let text = params_to_string(&params);
            let back = params_from_string(&text).unwrap();
            assert_eq!(params, back);
            assert_eq!(text, params_to_string(&back), "second save must be byte-identical");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("skillrep-persist-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("params.txt");
        let params = sample_params(true);
        save_params(&params, &path).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(params, back);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn version_mismatch_is_reported() {
        let err = params_from_string("skillrep params v9\n").unwrap_err();
        assert!(matches!(err, PersistError::VersionMismatch { .. }));
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let params = sample_params(true);
        let text = params_to_string(&params);

        let truncated: String =
            text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            params_from_string(&truncated),
            Err(PersistError::Malformed { .. })
        ));

        let corrupt = text.replace("coeff1", "coeffX");
        assert!(matches!(
            params_from_string(&corrupt),
            Err(PersistError::Malformed { .. })
        ));

        let trailing = format!("{text}junk\n");
        assert!(matches!(
            params_from_string(&trailing),
            Err(PersistError::Malformed { .. })
        ));

        let nan = text.replacen("0.1", "NaN", 1);
        assert!(matches!(params_from_string(&nan), Err(PersistError::Malformed { .. })));
    }

    #[test]
    fn dual_grid_anchors_rebuild_identically() {
        let params = sample_params(false);
        let back = params_from_string(&params_to_string(&params)).unwrap();
        for (a, b) in params.duals.anchors().iter().zip(back.duals.anchors()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(params.duals.width().to_bits(), back.duals.width().to_bits());
    }
}
