use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NcmfError, NcmfModel, Result, FACTORS};
use crate::autograd::Tensor;
use crate::factana::FactorSet;
use crate::numkit::Mat;
use crate::recog::CtcHead;

type Nested3 = Vec<Vec<Vec<f64>>>;

fn nest3(t: &Tensor) -> Nested3 {
    let s = t.shape();
    let (b, c) = (s[1], s[2]);
    t.data()
        .chunks(b * c)
        .map(|plane| plane.chunks(c).map(<[f64]>::to_vec).collect())
        .collect()
}

fn flatten3(name: &str, v: &Nested3) -> Result<Tensor> {
    let a = v.len();
    let b = v.first().map_or(0, Vec::len);
    let c = v.first().and_then(|p| p.first()).map_or(0, Vec::len);
    if a == 0
        || b == 0
        || c == 0
        || v.iter()
            .any(|p| p.len() != b || p.iter().any(|r| r.len() != c))
    {
        return Err(NcmfError::Checkpoint(format!(
            "{name} is not a non-empty rectangular 3-D array"
        )));
    }
    let data = v.iter().flatten().flatten().copied().collect();
    Tensor::from_vec(vec![a, b, c], data).map_err(|e| NcmfError::Checkpoint(e.to_string()))
}

fn vector(v: &[f64]) -> Result<Tensor> {
    Tensor::from_vec(vec![v.len()], v.to_vec()).map_err(|e| NcmfError::Checkpoint(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadDoc {
    kernel: Nested3,
    bias: Vec<f64>,
}

/// On-disk model: encoder and decoder kernels as nested arrays, plus the
/// factors and recognizer head used alongside it when available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    #[serde(rename = "D")]
    gestures: usize,
    #[serde(rename = "K")]
    window: usize,
    q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    /// Factor scores were multiplied by this before training.
    #[serde(default = "unit")]
    score_scale: f64,
    enc1: Nested3,
    enc1_bias: Vec<f64>,
    enc2: Nested3,
    enc2_bias: Vec<f64>,
    dec: Nested3,
    /// 2p×5, already divided by `score_scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<HeadDoc>,
}

fn unit() -> f64 {
    1.0
}

impl Checkpoint {
    pub fn new(model: &NcmfModel, factors: Option<&FactorSet>, head: Option<&CtcHead>) -> Self {
        Self {
            gestures: model.gestures(),
            window: model.window(),
            q: FACTORS,
            p: factors.map(|f| f.matrix().rows() / 2),
            score_scale: 1.0,
            enc1: nest3(&model.enc1),
            enc1_bias: model.enc1_bias.data().to_vec(),
            enc2: nest3(&model.enc2),
            enc2_bias: model.enc2_bias.data().to_vec(),
            dec: nest3(&model.dec),
            factors: factors.map(|f| f.matrix().to_rows()),
            head: head.map(|h| HeadDoc {
                kernel: nest3(&h.kernel),
                bias: h.bias.data().to_vec(),
            }),
        }
    }

    pub fn with_score_scale(mut self, scale: f64) -> Self {
        self.score_scale = scale;
        self
    }

    pub fn score_scale(&self) -> f64 {
        self.score_scale
    }

    pub fn model(&self) -> Result<NcmfModel> {
        let m = NcmfModel::from_parts(
            flatten3("enc1", &self.enc1)?,
            vector(&self.enc1_bias)?,
            flatten3("enc2", &self.enc2)?,
            vector(&self.enc2_bias)?,
            flatten3("dec", &self.dec)?,
        )?;
        if m.gestures() != self.gestures || m.window() != self.window || self.q != FACTORS {
            return Err(NcmfError::Checkpoint(format!(
                "header says D = {}, K = {}, q = {} but decoder is {}×{}×{FACTORS}",
                self.gestures,
                self.window,
                self.q,
                m.window(),
                m.gestures()
            )));
        }
        Ok(m)
    }

    pub fn factors(&self) -> Result<Option<FactorSet>> {
        let Some(rows) = &self.factors else {
            return Ok(None);
        };
        let f = FactorSet::new(Mat::from_rows(rows)?)?;
        if self.p.is_some_and(|p| 2 * p != f.matrix().rows()) {
            return Err(NcmfError::Checkpoint(format!(
                "p does not match {} factor rows",
                f.matrix().rows()
            )));
        }
        Ok(Some(f))
    }

    pub fn head(&self) -> Result<Option<CtcHead>> {
        match &self.head {
            None => Ok(None),
            Some(h) => Ok(Some(CtcHead::from_parts(
                flatten3("head kernel", &h.kernel)?,
                vector(&h.bias)?,
            )?)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self =
            serde_json::from_str(text).map_err(|e| NcmfError::Checkpoint(e.to_string()))?;
        if !(ck.score_scale.is_finite() && ck.score_scale > 0.0) {
            return Err(NcmfError::Checkpoint(format!(
                "score_scale {}",
                ck.score_scale
            )));
        }
        ck.model()?;
        ck.factors()?;
        ck.head()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| NcmfError::Checkpoint(e.to_string()))?;
        Self::from_json(&text)
    }
}
