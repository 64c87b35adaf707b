//! Differentiable operations on [`DiffTensor`].
//!
//! Every op computes its result eagerly and records a closure that maps
//! the upstream gradient to per-parent gradients.

use super::{DiffTensor, TensorError};

// ── Raw kernels ─────────────────────────────────────────────────────

/// C[m,n] = A[m,k] · B[k,n]
fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
    out
}

/// dA[m,k] = G[m,n] · Bᵀ where B is [k,n]
fn matmul_g_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        for p in 0..k {
            let mut s = 0.0;
            for j in 0..n {
                s += g[i * n + j] * b[p * n + j];
            }
            out[i * k + p] = s;
        }
    }
    out
}

/// dB[k,n] = Aᵀ · G where A is [m,k], G is [m,n]
fn matmul_at_g(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let grow = &g[i * n..(i + 1) * n];
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += aip * grow[j];
            }
        }
    }
    out
}

impl DiffTensor {
    // ── Linear algebra ──────────────────────────────────────────────

    /// Matrix product of two 2-d tensors.
    pub fn matmul(&self, rhs: &DiffTensor) -> Result<DiffTensor, TensorError> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: rhs.shape().to_vec(),
            });
        }
        let out = matmul_kernel(&self.data(), &rhs.data(), m, k, n);
        let (a, b) = (self.clone(), rhs.clone());
        Ok(DiffTensor::from_op(
            out,
            vec![m, n],
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let da = matmul_g_bt(g, &b.data(), m, n, k);
                let db = matmul_at_g(&a.data(), g, m, k, n);
                vec![da, db]
            }),
        ))
    }

    /// 2-d transpose.
    pub fn transpose(&self) -> Result<DiffTensor, TensorError> {
        let (r, c) = self.dims2("transpose")?;
        let src = self.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        drop(src);
        Ok(DiffTensor::from_op(
            out,
            vec![c, r],
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        dg[i * c + j] = g[j * r + i];
                    }
                }
                vec![dg]
            }),
        ))
    }

    // ── Elementwise ─────────────────────────────────────────────────

    pub fn add(&self, rhs: &DiffTensor) -> Result<DiffTensor, TensorError> {
        self.same_shape(rhs, "add")?;
        let out: Vec<f64> = self.data().iter().zip(rhs.data().iter()).map(|(a, b)| a + b).collect();
        Ok(DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(|g| vec![g.to_vec(), g.to_vec()]),
        ))
    }

    pub fn sub(&self, rhs: &DiffTensor) -> Result<DiffTensor, TensorError> {
        self.same_shape(rhs, "sub")?;
        let out: Vec<f64> = self.data().iter().zip(rhs.data().iter()).map(|(a, b)| a - b).collect();
        Ok(DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(|g| vec![g.to_vec(), g.iter().map(|x| -x).collect()]),
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &DiffTensor) -> Result<DiffTensor, TensorError> {
        self.same_shape(rhs, "mul")?;
        let out: Vec<f64> = self.data().iter().zip(rhs.data().iter()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.clone(), rhs.clone());
        Ok(DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let da: Vec<f64> = g.iter().zip(b.data().iter()).map(|(g, b)| g * b).collect();
                let db: Vec<f64> = g.iter().zip(a.data().iter()).map(|(g, a)| g * a).collect();
                vec![da, db]
            }),
        ))
    }

    /// Multiply every entry by a constant.
    pub fn scale(&self, s: f64) -> DiffTensor {
        let out: Vec<f64> = self.data().iter().map(|x| x * s).collect();
        DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().map(|x| x * s).collect()]),
        )
    }

    pub fn neg(&self) -> DiffTensor {
        self.scale(-1.0)
    }

    /// Elementwise absolute value; subgradient 0 at 0.
    pub fn abs(&self) -> DiffTensor {
        let out: Vec<f64> = self.data().iter().map(|x| x.abs()).collect();
        let x = self.clone();
        DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let dg = g
                    .iter()
                    .zip(x.data().iter())
                    .map(|(g, &v)| {
                        if v > 0.0 {
                            *g
                        } else if v < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![dg]
            }),
        )
    }

    /// Elementwise square root; subgradient 0 at 0.
    pub fn sqrt(&self) -> DiffTensor {
        let out: Vec<f64> = self.data().iter().map(|x| x.sqrt()).collect();
        let x = self.clone();
        DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let dg = g
                    .iter()
                    .zip(x.data().iter())
                    .map(|(g, &v)| if v > 0.0 { g * 0.5 / v.sqrt() } else { 0.0 })
                    .collect();
                vec![dg]
            }),
        )
    }

    /// x if x >= 0 else slope * x.
    pub fn leaky_relu(&self, slope: f64) -> DiffTensor {
        let out: Vec<f64> = self.data().iter().map(|&x| if x >= 0.0 { x } else { slope * x }).collect();
        let x = self.clone();
        DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let dg = g
                    .iter()
                    .zip(x.data().iter())
                    .map(|(g, &v)| if v >= 0.0 { *g } else { slope * g })
                    .collect();
                vec![dg]
            }),
        )
    }

    // ── Broadcasting helpers ────────────────────────────────────────

    /// Add a length-C bias vector to every row of an R×C tensor.
    pub fn add_row(&self, bias: &DiffTensor) -> Result<DiffTensor, TensorError> {
        let (r, c) = self.dims2("add_row")?;
        if bias.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let b = bias.data();
        let out: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b[i % c])
            .collect();
        drop(b);
        Ok(DiffTensor::from_op(
            out,
            vec![r, c],
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                let mut db = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        db[j] += g[i * c + j];
                    }
                }
                vec![g.to_vec(), db]
            }),
        ))
    }

    // ── Structure ───────────────────────────────────────────────────

    /// Concatenate 2-d tensors with equal row counts along the column axis.
    pub fn concat_cols(parts: &[&DiffTensor]) -> Result<DiffTensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_cols" });
        }
        let (rows, _) = parts[0].dims2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.dims2("concat_cols")?;
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = p.data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let widths_bw = widths.clone();
        Ok(DiffTensor::from_op(
            out,
            vec![rows, total],
            parts.iter().map(|p| (*p).clone()).collect(),
            Box::new(move |g| {
                let mut grads = Vec::with_capacity(widths_bw.len());
                let mut offset = 0;
                for &w in &widths_bw {
                    let mut dg = vec![0.0; rows * w];
                    for r in 0..rows {
                        dg[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    grads.push(dg);
                    offset += w;
                }
                grads
            }),
        ))
    }

    /// Columns [start, start+len) of a 2-d tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<DiffTensor, TensorError> {
        let (r, c) = self.dims2("slice_cols")?;
        if start + len > c {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice_cols",
                index: start + len,
                extent: c,
            });
        }
        let src = self.data();
        let mut out = vec![0.0; r * len];
        for i in 0..r {
            out[i * len..(i + 1) * len].copy_from_slice(&src[i * c + start..i * c + start + len]);
        }
        drop(src);
        Ok(DiffTensor::from_op(
            out,
            vec![r, len],
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0.0; r * c];
                for i in 0..r {
                    dg[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                vec![dg]
            }),
        ))
    }

    /// Select rows of a 2-d tensor by index; duplicates allowed.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<DiffTensor, TensorError> {
        let (r, c) = self.dims2("gather_rows")?;
        for &i in indices {
            if i >= r {
                return Err(TensorError::IndexOutOfBounds { op: "gather_rows", index: i, extent: r });
            }
        }
        let src = self.data();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        drop(src);
        let idx = indices.to_vec();
        Ok(DiffTensor::from_op(
            out,
            vec![indices.len(), c],
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0.0; r * c];
                for (pos, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        dg[i * c + j] += g[pos * c + j];
                    }
                }
                vec![dg]
            }),
        ))
    }

    // ── Reductions ──────────────────────────────────────────────────

    /// Sum of all entries, as a scalar tensor.
    pub fn sum(&self) -> DiffTensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        DiffTensor::from_op(
            vec![s],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0]; n]]),
        )
    }

    /// Mean of all entries, as a scalar tensor.
    pub fn mean(&self) -> DiffTensor {
        let n = self.numel();
        let s: f64 = self.data().iter().sum();
        DiffTensor::from_op(
            vec![s / n as f64],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0] / n as f64; n]]),
        )
    }

    // ── Normalization and attention ─────────────────────────────────

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<DiffTensor, TensorError> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { op: "softmax", axis, shape });
        }
        let axis_len = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| o * axis_len * inner + a * inner + i;
                let max = (0..axis_len).map(|a| src[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for a in 0..axis_len {
                    let e = (src[at(a)] - max).exp();
                    out[at(a)] = e;
                    denom += e;
                }
                for a in 0..axis_len {
                    out[at(a)] /= denom;
                }
            }
        }
        drop(src);
        // Backward needs the softmax output itself; keep a copy rather than
        // a handle to the output node (that would make the graph cyclic).
        let saved = out.clone();
        Ok(DiffTensor::from_op(
            out,
            shape,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dg = vec![0.0; saved.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| o * axis_len * inner + a * inner + i;
                        let mut dot = 0.0;
                        for a in 0..axis_len {
                            dot += g[at(a)] * saved[at(a)];
                        }
                        for a in 0..axis_len {
                            dg[at(a)] = saved[at(a)] * (g[at(a)] - dot);
                        }
                    }
                }
                vec![dg]
            }),
        ))
    }

    /// Per-row standardization over the last axis followed by an affine map.
    pub fn layer_norm(
        &self,
        gamma: &DiffTensor,
        beta: &DiffTensor,
        eps: f64,
    ) -> Result<DiffTensor, TensorError> {
        let shape = self.shape().to_vec();
        let c = *shape.last().expect("layer_norm on zero-rank tensor");
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: if gamma.shape() != [c] { gamma.shape().to_vec() } else { beta.shape().to_vec() },
            });
        }
        let rows = self.numel() / c;
        let src = self.data();
        let gm = gamma.data();
        let bt = beta.data();
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for j in 0..c {
                out[r * c + j] = (row[j] - mean) * inv_std * gm[j] + bt[j];
            }
        }
        drop(src);
        drop(gm);
        drop(bt);
        let (x, gamma_t) = (self.clone(), gamma.clone());
        Ok(DiffTensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g| {
                let src = x.data();
                let gm = gamma_t.data();
                let mut dx = vec![0.0; src.len()];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for r in 0..rows {
                    let row = &src[r * c..(r + 1) * c];
                    let grow = &g[r * c..(r + 1) * c];
                    let mean = row.iter().sum::<f64>() / c as f64;
                    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
                    let inv_std = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|x| (x - mean) * inv_std).collect();
                    let dxhat: Vec<f64> = grow.iter().zip(gm.iter()).map(|(g, gm)| g * gm).collect();
                    let sum_dxhat: f64 = dxhat.iter().sum();
                    let sum_dxhat_xhat: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                    let cf = c as f64;
                    for j in 0..c {
                        dgamma[j] += grow[j] * xhat[j];
                        dbeta[j] += grow[j];
                        dx[r * c + j] =
                            inv_std / cf * (cf * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                    }
                }
                vec![dx, dgamma, dbeta]
            }),
        ))
    }

    /// Kernel-size-1 temporal convolution: a per-timestep affine map shared
    /// across time. `x` is T×Cin, `w` is Cin×Cout, `b` is length Cout.
    pub fn conv1d_time(&self, w: &DiffTensor, b: &DiffTensor) -> Result<DiffTensor, TensorError> {
        let (_, cin) = self.dims2("conv1d_time")?;
        let (win, wout) = w.dims2("conv1d_time")?;
        if win != cin {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d_time",
                lhs: self.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        if b.shape() != [wout] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d_time",
                lhs: w.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        self.matmul(w)?.add_row(b)
    }
}
