//! Multi-head attention and the small parameter bundles shared by the
//! encoder and decoder layers.

use crate::mat::Mat;
use crate::rng::Rng;
use crate::tensor::{DiffTensor, TensorError};

/// Query/key/value/output projections of one attention block.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub wq: DiffTensor,
    pub bq: DiffTensor,
    pub wk: DiffTensor,
    pub bk: DiffTensor,
    pub wv: DiffTensor,
    pub bv: DiffTensor,
    pub wo: DiffTensor,
    pub bo: DiffTensor,
}

impl AttentionParams {
    pub fn new(width: usize, rng: &mut Rng) -> Self {
        Self {
            wq: DiffTensor::uniform_param(&[width, width], width, rng),
            bq: DiffTensor::zero_param(&[width]),
            wk: DiffTensor::uniform_param(&[width, width], width, rng),
            bk: DiffTensor::zero_param(&[width]),
            wv: DiffTensor::uniform_param(&[width, width], width, rng),
            bv: DiffTensor::zero_param(&[width]),
            wo: DiffTensor::uniform_param(&[width, width], width, rng),
            bo: DiffTensor::zero_param(&[width]),
        }
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, DiffTensor)>) {
        out.push((format!("{prefix}.wq"), self.wq.clone()));
        out.push((format!("{prefix}.bq"), self.bq.clone()));
        out.push((format!("{prefix}.wk"), self.wk.clone()));
        out.push((format!("{prefix}.bk"), self.bk.clone()));
        out.push((format!("{prefix}.wv"), self.wv.clone()));
        out.push((format!("{prefix}.bv"), self.bv.clone()));
        out.push((format!("{prefix}.wo"), self.wo.clone()));
        out.push((format!("{prefix}.bo"), self.bo.clone()));
    }
}

/// Learnable affine of a LayerNorm.
#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gamma: DiffTensor,
    pub beta: DiffTensor,
}

impl LayerNormParams {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: DiffTensor::param(vec![1.0; width], &[width]),
            beta: DiffTensor::zero_param(&[width]),
        }
    }

    pub fn apply(&self, x: &DiffTensor, eps: f64) -> Result<DiffTensor, TensorError> {
        x.layer_norm(&self.gamma, &self.beta, eps)
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, DiffTensor)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }
}

/// Two-layer perceptron with a Leaky ReLU between.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub w1: DiffTensor,
    pub b1: DiffTensor,
    pub w2: DiffTensor,
    pub b2: DiffTensor,
}

impl MlpParams {
    pub fn new(width: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w1: DiffTensor::uniform_param(&[width, hidden], width, rng),
            b1: DiffTensor::zero_param(&[hidden]),
            w2: DiffTensor::uniform_param(&[hidden, width], hidden, rng),
            b2: DiffTensor::zero_param(&[width]),
        }
    }

    pub fn apply(&self, x: &DiffTensor, slope: f64) -> Result<DiffTensor, TensorError> {
        x.matmul(&self.w1)?
            .add_row(&self.b1)?
            .leaky_relu(slope)
            .matmul(&self.w2)?
            .add_row(&self.b2)
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, DiffTensor)>) {
        out.push((format!("{prefix}.w1"), self.w1.clone()));
        out.push((format!("{prefix}.b1"), self.b1.clone()));
        out.push((format!("{prefix}.w2"), self.w2.clone()));
        out.push((format!("{prefix}.b2"), self.b2.clone()));
    }
}

/// Scaled dot-product attention over `heads` column slices.
///
/// Queries come from `query_src` (Tq×W); keys and values from `kv_src`
/// (Tk×W). Self-attention passes the same tensor twice. Returns the
/// attended output (Tq×W, after the output projection) together with a
/// per-head snapshot of the attention weights (each Tq×Tk).
pub fn multi_head_attention(
    query_src: &DiffTensor,
    kv_src: &DiffTensor,
    params: &AttentionParams,
    heads: usize,
) -> Result<(DiffTensor, Vec<Mat>), TensorError> {
    let (_, width) = query_src.dims2("attention")?;
    let (_, kv_width) = kv_src.dims2("attention")?;
    if width != kv_width {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            lhs: query_src.shape().to_vec(),
            rhs: kv_src.shape().to_vec(),
        });
    }
    assert!(heads > 0 && width % heads == 0, "width {width} not divisible by {heads} heads");
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = query_src.matmul(&params.wq)?.add_row(&params.bq)?;
    let k = kv_src.matmul(&params.wk)?.add_row(&params.bk)?;
    let v = kv_src.matmul(&params.wv)?.add_row(&params.bv)?;

    let mut head_outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice_cols(h * dh, dh)?;
        let kh = k.slice_cols(h * dh, dh)?;
        let vh = v.slice_cols(h * dh, dh)?;
        let scores = qh.matmul(&kh.transpose()?)?.scale(scale);
        let attn = scores.softmax(1)?;
        weights.push(attn.to_mat());
        head_outputs.push(attn.matmul(&vh)?);
    }
    let refs: Vec<&DiffTensor> = head_outputs.iter().collect();
    let merged = DiffTensor::concat_cols(&refs)?;
    let out = merged.matmul(&params.wo)?.add_row(&params.bo)?;
    Ok((out, weights))
}
