//! Versioned JSON checkpoints.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which is enough
//! to recover every `f64` exactly, so `load(save(x)) == x` and saving again
//! reproduces the same bytes.

use std::io;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

use super::{DenoiserParams, Dense, EmbeddingPlacement};
use crate::diffusion::VarianceSchedule;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with the schedule it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub modulation_order: usize,
    pub schedule: VarianceSchedule,
    pub params: DenoiserParams,
    /// Free-form metadata (seed, training configuration, ...).
    pub meta: Value,
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCheckpoint {
    version: u32,
    modulation_order: usize,
    t_steps: usize,
    beta: Vec<f64>,
    #[serde(default)]
    embedding_placement: EmbeddingPlacement,
    layers: Vec<RawLayer>,
    time_embed: Vec<Vec<f64>>,
    #[serde(default)]
    meta: Value,
}

struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Checkpoint(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::Checkpoint(format!("{what}: {e}")))
}

impl Checkpoint {
    pub fn new(
        modulation_order: usize,
        schedule: VarianceSchedule,
        params: DenoiserParams,
        meta: Value,
    ) -> Result<Self> {
        if params.t_steps() != schedule.t_steps() {
            return Err(Error::Checkpoint(format!(
                "schedule has {} steps but the model has {} embedding rows",
                schedule.t_steps(),
                params.t_steps()
            )));
        }
        Ok(Self { modulation_order, schedule, params, meta })
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let raw = RawCheckpoint {
            version: CHECKPOINT_VERSION,
            modulation_order: self.modulation_order,
            t_steps: self.schedule.t_steps(),
            beta: self.schedule.betas().to_vec(),
            embedding_placement: self.params.placement(),
            layers: self
                .params
                .layers()
                .iter()
                .map(|l| RawLayer { w: to_rows(&l.w), b: l.b.to_vec() })
                .collect(),
            time_embed: to_rows(self.params.time_embed()),
            meta: self.meta.clone(),
        };
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
        raw.serialize(&mut ser).expect("serialising to memory cannot fail");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Checkpoint("missing version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::CheckpointVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        let raw: RawCheckpoint =
            serde_json::from_value(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if raw.beta.len() != raw.t_steps {
            return Err(Error::Checkpoint(format!(
                "t_steps is {} but beta has {} entries",
                raw.t_steps,
                raw.beta.len()
            )));
        }
        if raw.time_embed.len() != raw.t_steps {
            return Err(Error::Checkpoint(format!(
                "t_steps is {} but time_embed has {} rows",
                raw.t_steps,
                raw.time_embed.len()
            )));
        }
        let schedule = VarianceSchedule::from_betas(raw.beta)?;
        let layers = raw
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(Dense { w: from_rows(&l.w, &format!("layer {k}"))?, b: Array1::from(l.b.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        let embed = from_rows(&raw.time_embed, "time_embed")?;
        let params = DenoiserParams::from_parts(layers, embed, raw.embedding_placement)?;
        Self::new(raw.modulation_order, schedule, params, raw.meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sched = VarianceSchedule::linear(6, 1e-4, 0.02).unwrap();
        let mut params = DenoiserParams::init(6, 8, EmbeddingPlacement::EveryHidden, &mut rng);
        params.time_embed_mut().mapv_inplace(|_| rng.random_range(-1.0..1.0) * 1e-7);
        let meta = serde_json::json!({ "seed": 5, "note": "test", "lr": 0.001 });
        Checkpoint::new(16, sched, params, meta).unwrap()
    }

    #[test]
    fn exact_round_trip() {
        let ck = sample();
        let bytes = ck.to_json_bytes();
        let back = Checkpoint::from_json_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json_bytes(), bytes);
    }

    #[test]
    fn numbers_have_seventeen_significant_digits() {
        let text = String::from_utf8(sample().to_json_bytes()).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["t_steps"], 6);
        assert_eq!(v["layers"].as_array().unwrap().len(), 4);
        let beta0 = "1.0000000000000000e-4";
        assert!(text.contains(beta0), "beta not printed with full precision");
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let bytes = sample().to_json_bytes();
        for cut in [0, 1, bytes.len() / 3, bytes.len() - 3] {
            assert!(Checkpoint::from_json_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn version_mismatch() {
        let text = String::from_utf8(sample().to_json_bytes()).unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            Checkpoint::from_json_bytes(bumped.as_bytes()),
            Err(Error::CheckpointVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn embedding_rows_must_match_schedule() {
        let mut v: Value = serde_json::from_slice(&sample().to_json_bytes()).unwrap();
        v["time_embed"].as_array_mut().unwrap().truncate(3);
        let err = Checkpoint::from_json_bytes(v.to_string().as_bytes()).unwrap_err();
        assert!(err.to_string().contains("time_embed"), "{err}");

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DenoiserParams::init(5, 4, EmbeddingPlacement::EveryHidden, &mut rng);
        let s = VarianceSchedule::linear(10, 1e-4, 0.02).unwrap();
        assert!(Checkpoint::new(4, s, p, Value::Null).is_err());
    }
}
