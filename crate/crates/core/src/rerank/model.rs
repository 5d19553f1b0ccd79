use super::features::DIM;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const FORMAT_TAG: &str = "RERANK";
pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("feature vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported model format version {0}")]
    FormatVersionMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    LinearQ,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::LinearQ => "linear_q",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Free-form provenance (`key=value` lines in the file).
    pub metadata: BTreeMap<String, String>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl RerankModel {
    pub fn zeros(kind: ModelKind) -> Self {
        RerankModel { kind, weights: vec![0.0; DIM], bias: 0.0, metadata: BTreeMap::new() }
    }

    /// `w·x + b` before squashing.
    pub fn raw(&self, x: &[f64]) -> Result<f64, RerankError> {
        if x.len() != self.weights.len() {
            return Err(RerankError::DimensionMismatch { expected: self.weights.len(), got: x.len() });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }

    /// Score in `[0, 1]`.
    pub fn predict(&self, x: &[f64]) -> Result<f64, RerankError> {
        Ok(sigmoid(self.raw(x)?))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FORMAT_TAG} {FORMAT_VERSION} {}\n{}\n", self.kind.as_str(), self.bias);
        let ws: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        out.push_str(&ws.join(" "));
        out.push('\n');
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "{k}={}", v.replace('\n', " "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RerankError> {
        let corrupt = |m: &str| RerankError::CorruptModel(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| corrupt("empty file"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.first() != Some(&FORMAT_TAG) || parts.len() != 3 {
            return Err(corrupt("missing header"));
        }
        if parts[1] != FORMAT_VERSION {
            return Err(RerankError::FormatVersionMismatch(parts[1].to_string()));
        }
        let kind = match parts[2] {
            "logistic" => ModelKind::Logistic,
            "linear_q" => ModelKind::LinearQ,
            other => return Err(corrupt(&format!("unknown kind {other}"))),
        };
        let bias: f64 = lines
            .next()
            .ok_or_else(|| corrupt("missing bias"))?
            .trim()
            .parse()
            .map_err(|_| corrupt("bad bias"))?;
        let weights: Vec<f64> = lines
            .next()
            .ok_or_else(|| corrupt("missing weights"))?
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| corrupt("bad weight"))?;
        if weights.len() != DIM {
            return Err(corrupt(&format!("expected {DIM} weights, found {}", weights.len())));
        }
        let mut metadata = BTreeMap::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| corrupt("bad metadata line"))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        Ok(RerankModel { kind, weights, bias, metadata })
    }
}

pub fn save_model(model: &RerankModel, path: &Path) -> Result<(), RerankError> {
    Ok(std::fs::write(path, model.to_text())?)
}

pub fn load_model(path: &Path) -> Result<RerankModel, RerankError> {
    RerankModel::from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64) -> RerankModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = RerankModel::zeros(ModelKind::Logistic);
        m.weights = (0..DIM).map(|_| rng.random_range(-3.0..3.0)).collect();
        m.bias = rng.random_range(-1.0..1.0);
        m.metadata.insert("trained_on".into(), "synthetic".into());
        m
    }

    #[test]
    fn predict_basics() {
        let m = RerankModel::zeros(ModelKind::Logistic);
        assert_eq!(m.predict(&[1.0; DIM]).unwrap(), 0.5);
        let mut big = m.clone();
        big.bias = 1e6;
        assert!((big.predict(&[0.0; DIM]).unwrap() - 1.0).abs() < 1e-12);
        big.bias = -1e6;
        assert!(big.predict(&[0.0; DIM]).unwrap() >= 0.0);
        assert!(matches!(m.predict(&[0.0; 3]), Err(RerankError::DimensionMismatch { .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let m = random_model(3);
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x: Vec<f64> = (0..DIM).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!((m.predict(&x).unwrap() - back.predict(&x).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn corrupt_and_future_files() {
        let text = random_model(1).to_text();
        let truncated: String = text.lines().take(2).collect::<Vec<_>>().join("\n");
        assert!(matches!(RerankModel::from_text(&truncated), Err(RerankError::CorruptModel(_))));
        let future = text.replacen("RERANK v1", "RERANK v2", 1);
        assert!(matches!(RerankModel::from_text(&future), Err(RerankError::FormatVersionMismatch(v)) if v == "v2"));
        assert!(matches!(RerankModel::from_text(""), Err(RerankError::CorruptModel(_))));
    }
}
