use std::path::Path;

use super::clip::{ClipConfig, ClipMethod, ClipState};
use super::head::LinearHead;
use super::knn::KnnModel;
use super::maha::{CovarianceKind, MahaModel};
use super::{DetectorKind, DetectorModel, HeadScore};
use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};
use crate::linalg::Matrix;

pub const DETECTOR_MAGIC: &[u8] = b"GSO-DET\0\0";

pub fn encode_detector(model: &DetectorModel) -> Vec<u8> {
    let mut w = ByteWriter::new(DETECTOR_MAGIC);
    w.u8(model.kind().code());
    match model {
        DetectorModel::Head {
            head,
            score,
            clip,
            state,
            ..
        } => {
            w.u32(head.dim() as u32);
            w.u32(head.num_classes() as u32);
            w.f64(head.bn_epsilon);
            w.f64s(&head.bn_mean);
            w.f64s(&head.bn_var);
            w.f64s(&head.bn_scale);
            w.f64s(&head.bn_shift);
            w.f64s(head.fc_weight.as_slice());
            w.f64s(&head.fc_bias);
            match score {
                HeadScore::Msp => {
                    w.u8(0);
                    w.f64(0.0);
                }
                HeadScore::Energy { temperature } => {
                    w.u8(1);
                    w.f64(*temperature);
                }
            }
            w.u8(clip.method.code());
            w.u32(clip.d as u32);
            w.f64(clip.p);
            w.f64(clip.lambda);
            match state {
                ClipState::None => w.u8(0),
                ClipState::React { threshold } => {
                    w.u8(1);
                    w.f64(*threshold);
                }
                ClipState::Bats { mu, delta, lambda } => {
                    w.u8(2);
                    w.u32(mu.len() as u32);
                    w.f64s(mu);
                    w.f64s(delta);
                    w.f64(*lambda);
                }
            }
        }
        DetectorModel::Maha(m) => {
            w.u32(m.dim() as u32);
            w.u32(m.class_means.rows() as u32);
            w.u8(m.covariance.code());
            w.f64(m.ridge);
            w.f64s(m.class_means.as_slice());
            w.f64s(m.shared_cov.as_slice());
        }
        DetectorModel::Knn(m) => {
            w.u64(m.bank().rows() as u64);
            w.u32(m.dim() as u32);
            w.u32(m.k() as u32);
            w.u8(m.normalize() as u8);
            w.f64s(m.bank().as_slice());
        }
    }
    w.finish()
}

fn matrix(r: &mut ByteReader, rows: usize, cols: usize) -> Result<Matrix> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| r.error("matrix size overflows"))?;
    Matrix::from_vec(rows, cols, r.f64s(n)?)
}

pub fn decode_detector(path: &Path, bytes: &[u8]) -> Result<DetectorModel> {
    let mut r = ByteReader::open(path, bytes, DETECTOR_MAGIC)?;
    let code = r.u8()?;
    let kind = DetectorKind::from_code(code).ok_or_else(|| r.error(format!("unknown detector kind {code}")))?;
    let invalid = |e: Error| Error::Validation {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let model = match kind {
        DetectorKind::Maha => {
            let k = r.u32()? as usize;
            let c = r.u32()? as usize;
            let cov_code = r.u8()?;
            let covariance =
                CovarianceKind::from_code(cov_code).ok_or_else(|| r.error(format!("unknown covariance kind {cov_code}")))?;
            let ridge = r.f64()?;
            let means = matrix(&mut r, c, k)?;
            let cov = matrix(&mut r, k, k)?;
            r.finish()?;
            DetectorModel::Maha(MahaModel::new(means, cov, ridge, covariance).map_err(invalid)?)
        }
        DetectorKind::Knn => {
            let n = r.u64()? as usize;
            let k = r.u32()? as usize;
            let nn = r.u32()? as usize;
            let normalize = match r.u8()? {
                0 => false,
                1 => true,
                other => return Err(r.error(format!("invalid normalize flag {other}"))),
            };
            let bank = matrix(&mut r, n, k)?;
            r.finish()?;
            DetectorModel::Knn(KnnModel::from_stored(bank, nn, normalize).map_err(invalid)?)
        }
        _ => {
            let k = r.u32()? as usize;
            let c = r.u32()? as usize;
            let bn_epsilon = r.f64()?;
            let bn_mean = r.f64s(k)?;
            let bn_var = r.f64s(k)?;
            let bn_scale = r.f64s(k)?;
            let bn_shift = r.f64s(k)?;
            let fc_weight = matrix(&mut r, c, k)?;
            let fc_bias = r.f64s(c)?;
            let score = match (r.u8()?, r.f64()?) {
                (0, _) => HeadScore::Msp,
                (1, temperature) => HeadScore::Energy { temperature },
                (other, _) => return Err(r.error(format!("unknown head score {other}"))),
            };
            let method_code = r.u8()?;
            let method =
                ClipMethod::from_code(method_code).ok_or_else(|| r.error(format!("unknown clip method {method_code}")))?;
            let clip = ClipConfig {
                method,
                d: r.u32()? as usize,
                p: r.f64()?,
                lambda: r.f64()?,
            };
            let state = match r.u8()? {
                0 => ClipState::None,
                1 => ClipState::React { threshold: r.f64()? },
                2 => {
                    let d = r.u32()? as usize;
                    ClipState::Bats {
                        mu: r.f64s(d)?,
                        delta: r.f64s(d)?,
                        lambda: r.f64()?,
                    }
                }
                other => return Err(r.error(format!("unknown clip state {other}"))),
            };
            r.finish()?;
            let head = LinearHead {
                bn_mean,
                bn_var,
                bn_scale,
                bn_shift,
                fc_weight,
                fc_bias,
                bn_epsilon,
            };
            head.validate().map_err(invalid)?;
            clip.validate(k).map_err(invalid)?;
            let expected = match kind {
                DetectorKind::Msp => (matches!(score, HeadScore::Msp), ClipMethod::None),
                DetectorKind::Energy => (matches!(score, HeadScore::Energy { .. }), ClipMethod::None),
                DetectorKind::React => (matches!(score, HeadScore::Energy { .. }), ClipMethod::React),
                _ => (matches!(score, HeadScore::Energy { .. }), ClipMethod::Bats),
            };
            if !expected.0 || expected.1 != method {
                return Err(invalid(Error::data(format!("{kind} detector has inconsistent score or clip settings"))));
            }
            DetectorModel::Head {
                kind,
                head,
                score,
                clip,
                state,
            }
        }
    };
    Ok(model)
}

/// Writes the binary detector container. Fit metadata goes in the sidecar,
/// written by the caller via [`format::write_meta`].
pub fn save_detector(model: &DetectorModel, path: &Path) -> Result<()> {
    format::write_atomic(path, &encode_detector(model))
}

pub fn load_detector(path: &Path) -> Result<DetectorModel> {
    decode_detector(path, &format::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::DetectorConfig;

    fn data() -> (Matrix, Vec<usize>) {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() + (i % 2) as f64 * 3.0, t.cos(), (2.0 * t).sin() * 0.5]
            })
            .collect();
        let labels = (0..40).map(|i| i % 2).collect();
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn every_kind_round_trips_bitwise() {
        let (x, y) = data();
        let cfg = DetectorConfig {
            clip_dims: 2,
            knn_k: 3,
            knn_normalize: true,
            ..DetectorConfig::default()
        };
        for kind in DetectorKind::ALL {
            let model = DetectorModel::fit(kind, &x, &y, 2, &cfg).unwrap();
            let bytes = encode_detector(&model);
            let back = decode_detector(Path::new("d"), &bytes).unwrap();
            assert_eq!(back, model, "{kind}");
            assert_eq!(encode_detector(&back), bytes);
            assert_eq!(back.score_rows(&x).unwrap(), model.score_rows(&x).unwrap());
        }
    }

    #[test]
    fn corrupt_bytes_fail_with_exit_code_2() {
        let (x, y) = data();
        let model = DetectorModel::fit(DetectorKind::Knn, &x, &y, 2, &DetectorConfig::default()).unwrap();
        let mut bytes = encode_detector(&model);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert_eq!(decode_detector(Path::new("d"), &bytes).unwrap_err().exit_code(), 2);
        let bytes = encode_detector(&model);
        assert_eq!(decode_detector(Path::new("d"), &bytes[..bytes.len() - 9]).unwrap_err().exit_code(), 2);
    }
}
