//! Elementwise, reduction, linear and coordinate-readout primitives.

use super::{invalid, Graph, Result, Scalar, Tensor, TensorError};

/// Pooling mode for [`Graph::pool2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, b2, o2) = (a.clone(), b.clone(), out.clone());
        self.register("add", &[a, b], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                if a2.requires_grad() {
                    a2.accumulate_grad(g);
                }
                if b2.requires_grad() {
                    b2.accumulate_grad(g);
                }
            }
        });
        Ok(out)
    }

    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("sub", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, b2, o2) = (a.clone(), b.clone(), out.clone());
        self.register("sub", &[a, b], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                if a2.requires_grad() {
                    a2.accumulate_grad(g);
                }
                if b2.requires_grad() {
                    b2.accumulate_grad_owned(g.iter().map(|&v| -v).collect());
                }
            }
        });
        Ok(out)
    }

    /// Elementwise product.
    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, b2, o2) = (a.clone(), b.clone(), out.clone());
        self.register("mul", &[a, b], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                if a2.requires_grad() {
                    let bd = b2.data();
                    a2.accumulate_grad_owned(g.iter().zip(bd.iter()).map(|(&gi, &bi)| gi * bi).collect());
                }
                if b2.requires_grad() {
                    let ad = a2.data();
                    b2.accumulate_grad_owned(g.iter().zip(ad.iter()).map(|(&gi, &ai)| gi * ai).collect());
                }
            }
        });
        Ok(out)
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&self, a: &Tensor<T>, c: f64) -> Result<Tensor<T>> {
        let cv = T::from_f64(c);
        let data = a.data().iter().map(|&x| x * cv).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, o2) = (a.clone(), out.clone());
        self.register("scale", &[a], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                a2.accumulate_grad_owned(g.iter().map(|&v| v * cv).collect());
            }
        });
        Ok(out)
    }

    /// Rectified linear unit. The gradient at exactly 0 is 0.
    pub fn relu(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let data = a.data().iter().map(|&x| x.maximum(T::zero())).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, o2) = (a.clone(), out.clone());
        self.register("relu", &[a], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                let od = o2.data();
                a2.accumulate_grad_owned(
                    g.iter()
                        .zip(od.iter())
                        .map(|(&gi, &oi)| if oi > T::zero() { gi } else { T::zero() })
                        .collect(),
                );
            }
        });
        Ok(out)
    }

    pub fn sigmoid(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let data = a
            .data()
            .iter()
            .map(|&x| T::one() / (T::one() + (-x).exp()))
            .collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, o2) = (a.clone(), out.clone());
        self.register("sigmoid", &[a], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                let od = o2.data();
                a2.accumulate_grad_owned(
                    g.iter()
                        .zip(od.iter())
                        .map(|(&gi, &si)| gi * si * (T::one() - si))
                        .collect(),
                );
            }
        });
        Ok(out)
    }

    /// ln(x + eps), the epsilon keeping the log defined at zero.
    pub fn log_eps(&self, a: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        let ev = T::from_f64(eps);
        let data = a.data().iter().map(|&x| (x + ev).ln()).collect();
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, o2) = (a.clone(), out.clone());
        self.register("log_eps", &[a], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                let ad = a2.data();
                a2.accumulate_grad_owned(
                    g.iter()
                        .zip(ad.iter())
                        .map(|(&gi, &ai)| gi / (ai + ev))
                        .collect(),
                );
            }
        });
        Ok(out)
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let mut acc = T::zero();
        for &v in a.data().iter() {
            acc += v;
        }
        let out = Tensor::from_vec(&[1], vec![acc])?;
        let (a2, o2) = (a.clone(), out.clone());
        self.register("sum", &[a], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                a2.accumulate_grad_owned(vec![g[0]; a2.numel()]);
            }
        });
        Ok(out)
    }

    /// Concatenate along the channel axis of [N, C, H, W] tensors.
    /// Inputs are preserved in order; all non-channel extents must agree.
    pub fn concat_channels(&self, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(invalid("concat_channels", "need at least one input"));
        }
        let (n, _, h, w) = parts[0].dims4("concat_channels")?;
        let mut c_total = 0;
        for p in parts {
            let (pn, pc, ph, pw) = p.dims4("concat_channels")?;
            if pn != n || ph != h || pw != w {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            c_total += pc;
        }
        let hw = h * w;
        let mut data = vec![T::zero(); n * c_total * hw];
        let mut c_off = 0;
        for p in parts {
            let pc = p.shape()[1];
            let pd = p.data();
            for ni in 0..n {
                let src = &pd[ni * pc * hw..(ni + 1) * pc * hw];
                let dst = &mut data[(ni * c_total + c_off) * hw..(ni * c_total + c_off + pc) * hw];
                dst.copy_from_slice(src);
            }
            c_off += pc;
        }
        let out = Tensor::from_vec(&[n, c_total, h, w], data)?;
        let owned: Vec<Tensor<T>> = parts.iter().map(|&p| p.clone()).collect();
        let o2 = out.clone();
        self.register("concat_channels", parts, &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                let mut c_off = 0;
                for p in &owned {
                    let pc = p.shape()[1];
                    if p.requires_grad() {
                        let mut dp = vec![T::zero(); p.numel()];
                        for ni in 0..n {
                            let src = &g[(ni * c_total + c_off) * hw..(ni * c_total + c_off + pc) * hw];
                            dp[ni * pc * hw..(ni + 1) * pc * hw].copy_from_slice(src);
                        }
                        p.accumulate_grad_owned(dp);
                    }
                    c_off += pc;
                }
            }
        });
        Ok(out)
    }

    /// Per-pixel softmax over the channel axis of [N, C, H, W].
    pub fn softmax_channels(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = a.dims4("softmax_channels")?;
        let hw = h * w;
        let mut data = vec![T::zero(); a.numel()];
        {
            let ad = a.data();
            for ni in 0..n {
                for p in 0..hw {
                    let mut m = ad[ni * c * hw + p];
                    for ci in 1..c {
                        let v = ad[(ni * c + ci) * hw + p];
                        if v > m {
                            m = v;
                        }
                    }
                    let mut z = T::zero();
                    for ci in 0..c {
                        let e = (ad[(ni * c + ci) * hw + p] - m).exp();
                        data[(ni * c + ci) * hw + p] = e;
                        z += e;
                    }
                    for ci in 0..c {
                        data[(ni * c + ci) * hw + p] = data[(ni * c + ci) * hw + p] / z;
                    }
                }
            }
        }
        let out = Tensor::from_vec(a.shape(), data)?;
        let (a2, o2) = (a.clone(), out.clone());
        self.register("softmax_channels", &[a], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                let od = o2.data();
                let mut da = vec![T::zero(); a2.numel()];
                for ni in 0..n {
                    for p in 0..hw {
                        let mut dot = T::zero();
                        for ci in 0..c {
                            let idx = (ni * c + ci) * hw + p;
                            dot += g[idx] * od[idx];
                        }
                        for ci in 0..c {
                            let idx = (ni * c + ci) * hw + p;
                            da[idx] = od[idx] * (g[idx] - dot);
                        }
                    }
                }
                a2.accumulate_grad_owned(da);
            }
        });
        Ok(out)
    }

    /// Affine map out = x·w + b with x: [N, F], w: [F, G], b: [G].
    pub fn fully_connected(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, f) = x.dims2("fully_connected")?;
        let (wf, g_out) = w.dims2("fully_connected")?;
        if wf != f || b.shape() != [g_out] {
            return Err(TensorError::ShapeMismatch {
                op: "fully_connected",
                lhs: vec![n, f],
                rhs: w.shape().to_vec(),
            });
        }
        let mut data = vec![T::zero(); n * g_out];
        {
            let xd = x.data();
            let wd = w.data();
            unsafe {
                T::gemm(n, f, g_out, T::one(), xd.as_ptr(), wd.as_ptr(), T::zero(), data.as_mut_ptr());
            }
            let bd = b.data();
            for row in data.chunks_exact_mut(g_out) {
                for (o, &bi) in row.iter_mut().zip(bd.iter()) {
                    *o += bi;
                }
            }
        }
        let out = Tensor::from_vec(&[n, g_out], data)?;
        let (x2, w2, b2, o2) = (x.clone(), w.clone(), b.clone(), out.clone());
        self.register("fully_connected", &[x, w, b], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                if x2.requires_grad() {
                    // dx = dy · w^T
                    let wd = w2.data();
                    let mut wt = vec![T::zero(); f * g_out];
                    for fi in 0..f {
                        for gi in 0..g_out {
                            wt[gi * f + fi] = wd[fi * g_out + gi];
                        }
                    }
                    let mut dx = vec![T::zero(); n * f];
                    unsafe {
                        T::gemm(n, g_out, f, T::one(), g.as_ptr(), wt.as_ptr(), T::zero(), dx.as_mut_ptr());
                    }
                    x2.accumulate_grad_owned(dx);
                }
                if w2.requires_grad() {
                    // dw = x^T · dy
                    let xd = x2.data();
                    let mut xt = vec![T::zero(); f * n];
                    for ni in 0..n {
                        for fi in 0..f {
                            xt[fi * n + ni] = xd[ni * f + fi];
                        }
                    }
                    let mut dw = vec![T::zero(); f * g_out];
                    unsafe {
                        T::gemm(f, n, g_out, T::one(), xt.as_ptr(), g.as_ptr(), T::zero(), dw.as_mut_ptr());
                    }
                    w2.accumulate_grad_owned(dw);
                }
                if b2.requires_grad() {
                    let mut db = vec![T::zero(); g_out];
                    for row in g.chunks_exact(g_out) {
                        for (d, &gi) in db.iter_mut().zip(row.iter()) {
                            *d += gi;
                        }
                    }
                    b2.accumulate_grad_owned(db);
                }
            }
        });
        Ok(out)
    }

    /// Per-channel bias over [N, C, H, W]: out[n,c,h,w] = x[n,c,h,w] + b[c].
    pub fn bias_channels(&self, x: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4("bias_channels")?;
        if b.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "bias_channels",
                lhs: x.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let hw = h * w;
        let mut data = x.to_vec();
        {
            let bd = b.data();
            for ni in 0..n {
                for ci in 0..c {
                    let bi = bd[ci];
                    for v in &mut data[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                        *v += bi;
                    }
                }
            }
        }
        let out = Tensor::from_vec(x.shape(), data)?;
        let (x2, b2, o2) = (x.clone(), b.clone(), out.clone());
        self.register("bias_channels", &[x, b], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                if x2.requires_grad() {
                    x2.accumulate_grad(g);
                }
                if b2.requires_grad() {
                    let mut db = vec![T::zero(); c];
                    for ni in 0..n {
                        for ci in 0..c {
                            let mut acc = T::zero();
                            for &gv in &g[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                                acc += gv;
                            }
                            db[ci] += acc;
                        }
                    }
                    b2.accumulate_grad_owned(db);
                }
            }
        });
        Ok(out)
    }

    /// Mean over the spatial axes: [N, C, H, W] -> [N, C].
    pub fn global_avg_pool(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4("global_avg_pool")?;
        let hw = h * w;
        let inv = T::from_f64(1.0 / hw as f64);
        let mut data = vec![T::zero(); n * c];
        {
            let xd = x.data();
            for ni in 0..n {
                for ci in 0..c {
                    let mut acc = T::zero();
                    for &v in &xd[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                        acc += v;
                    }
                    data[ni * c + ci] = acc * inv;
                }
            }
        }
        let out = Tensor::from_vec(&[n, c], data)?;
        let (x2, o2) = (x.clone(), out.clone());
        self.register("global_avg_pool", &[x], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                let mut dx = vec![T::zero(); x2.numel()];
                for ni in 0..n {
                    for ci in 0..c {
                        let gv = g[ni * c + ci] * inv;
                        for d in &mut dx[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                            *d = gv;
                        }
                    }
                }
                x2.accumulate_grad_owned(dx);
            }
        });
        Ok(out)
    }

    /// Differentiable coordinate readout of heatmaps.
    ///
    /// For each [H, W] map: softmax over all pixels with temperature `tau`,
    /// then the expectation of pixel coordinates. Coordinates follow the
    /// u = column, v = row convention with the origin at the center of pixel
    /// (0, 0). Input [N, C, H, W] yields [N, 2C] laid out as
    /// (u_0, v_0, u_1, v_1, ...).
    pub fn soft_argmax(&self, maps: &Tensor<T>, tau: f64) -> Result<Tensor<T>> {
        let (n, c, h, w) = maps.dims4("soft_argmax")?;
        if !tau.is_finite() || tau <= 0.0 {
            return Err(invalid("soft_argmax", format!("temperature must be positive and finite, got {tau}")));
        }
        let hw = h * w;
        let tv = T::from_f64(tau);
        let mut probs = vec![T::zero(); maps.numel()];
        let mut data = vec![T::zero(); n * 2 * c];
        {
            let md = maps.data();
            if md.iter().any(|v| !v.is_finite()) {
                return Err(invalid("soft_argmax", "heatmap contains non-finite values"));
            }
            for m in 0..n * c {
                let src = &md[m * hw..(m + 1) * hw];
                let dst = &mut probs[m * hw..(m + 1) * hw];
                let mut mx = src[0];
                for &v in src.iter() {
                    if v > mx {
                        mx = v;
                    }
                }
                let mut z = T::zero();
                for (d, &v) in dst.iter_mut().zip(src.iter()) {
                    let e = ((v - mx) * tv).exp();
                    *d = e;
                    z += e;
                }
                let mut u = T::zero();
                let mut vv = T::zero();
                for row in 0..h {
                    for col in 0..w {
                        let p = dst[row * w + col] / z;
                        dst[row * w + col] = p;
                        u += p * T::from_f64(col as f64);
                        vv += p * T::from_f64(row as f64);
                    }
                }
                let (ni, ci) = (m / c, m % c);
                data[ni * 2 * c + 2 * ci] = u;
                data[ni * 2 * c + 2 * ci + 1] = vv;
            }
        }
        let out = Tensor::from_vec(&[n, 2 * c], data)?;
        let (m2, o2) = (maps.clone(), out.clone());
        self.register("soft_argmax", &[maps], &out, move || {
            if let Some(g) = o2.grad_ref().as_ref() {
                let od = o2.data();
                let mut dm = vec![T::zero(); m2.numel()];
                for m in 0..n * c {
                    let (ni, ci) = (m / c, m % c);
                    let du = g[ni * 2 * c + 2 * ci];
                    let dv = g[ni * 2 * c + 2 * ci + 1];
                    let u = od[ni * 2 * c + 2 * ci];
                    let v = od[ni * 2 * c + 2 * ci + 1];
                    let p = &probs[m * hw..(m + 1) * hw];
                    let d = &mut dm[m * hw..(m + 1) * hw];
                    for row in 0..h {
                        for col in 0..w {
                            let pi = p[row * w + col];
                            let cu = T::from_f64(col as f64) - u;
                            let cv = T::from_f64(row as f64) - v;
                            d[row * w + col] = tv * pi * (cu * du + cv * dv);
                        }
                    }
                }
                m2.accumulate_grad_owned(dm);
            }
        });
        Ok(out)
    }
}

/// Non-differentiable soft-argmax of a single plain map; shares the convention
/// of [`Graph::soft_argmax`]. Used for landmark extraction at evaluation time.
pub fn soft_argmax_map(map: &[f64], h: usize, w: usize, tau: f64) -> (f64, f64) {
    debug_assert_eq!(map.len(), h * w);
    let mx = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut u = 0.0;
    let mut v = 0.0;
    for row in 0..h {
        for col in 0..w {
            let e = ((map[row * w + col] - mx) * tau).exp();
            z += e;
            u += e * col as f64;
            v += e * row as f64;
        }
    }
    (u / z, v / z)
}

#[cfg(test)]
mod tests {
    use super::super::Graph;
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = g.relu(&x).unwrap();
        assert_eq!(y.to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn concat_preserves_inputs_in_order() {
        let g = Graph::<f64>::new();
        let a = Tensor::from_vec(&[1, 3, 1, 2], (0..6).map(|i| i as f64).collect()).unwrap();
        let b = Tensor::from_vec(&[1, 5, 1, 2], (10..20).map(|i| i as f64).collect()).unwrap();
        let c = g.concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[1, 8, 1, 2]);
        let d = c.to_vec();
        assert_eq!(&d[..6], &(0..6).map(|i| i as f64).collect::<Vec<_>>()[..]);
        assert_eq!(&d[6..], &(10..20).map(|i| i as f64).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn concat_rejects_mismatched_spatial_dims() {
        let g = Graph::<f64>::new();
        let a = Tensor::zeros(&[1, 2, 4, 4]);
        let b = Tensor::zeros(&[1, 2, 4, 5]);
        assert!(g.concat_channels(&[&a, &b]).is_err());
    }

    #[test]
    fn softmax_channels_sums_to_one() {
        let g = Graph::<f64>::new();
        let mut vals = Vec::new();
        for i in 0..24 {
            vals.push((i as f64 * 0.37).sin() * 3.0);
        }
        let x = Tensor::from_vec(&[1, 3, 2, 4], vals).unwrap();
        let y = g.softmax_channels(&x).unwrap();
        let d = y.to_vec();
        for p in 0..8 {
            let s: f64 = (0..3).map(|c| d[c * 8 + p]).sum();
            assert!((s - 1.0).abs() < 1e-6, "pixel {p} sums to {s}");
        }
    }

    #[test]
    fn fully_connected_identity_and_bias() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = Tensor::from_vec(&[3, 3], eye).unwrap();
        let b = Tensor::zeros(&[3]);
        let y = g.fully_connected(&x, &w, &b).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());

        let w0 = Tensor::zeros(&[3, 3]);
        let b1 = Tensor::from_vec(&[3], vec![7.0, 8.0, 9.0]).unwrap();
        let y2 = g.fully_connected(&x, &w0, &b1).unwrap();
        assert_eq!(y2.to_vec(), vec![7.0, 8.0, 9.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn fully_connected_matches_loop_oracle() {
        use rand::prelude::*;
        use rand_chacha::ChaCha12Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..5);
            let f = rng.gen_range(1..7);
            let go = rng.gen_range(1..6);
            let xv: Vec<f64> = (0..n * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wv: Vec<f64> = (0..f * go).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bv: Vec<f64> = (0..go).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = Graph::<f64>::new();
            let x = Tensor::from_vec(&[n, f], xv.clone()).unwrap();
            let w = Tensor::from_vec(&[f, go], wv.clone()).unwrap();
            let b = Tensor::from_vec(&[go], bv.clone()).unwrap();
            let y = g.fully_connected(&x, &w, &b).unwrap();
            let yd = y.to_vec();
            for ni in 0..n {
                for gi in 0..go {
                    let mut acc = bv[gi];
                    for fi in 0..f {
                        acc += xv[ni * f + fi] * wv[fi * go + gi];
                    }
                    assert!((acc - yd[ni * go + gi]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn soft_argmax_spike_recovers_position() {
        let g = Graph::<f64>::new();
        let (h, w) = (32, 48);
        let mut m = vec![0.0; h * w];
        m[20 * w + 10] = 1.0;
        let x = Tensor::from_vec(&[1, 1, h, w], m).unwrap();
        // high temperature sharpens the softmax enough to isolate the spike
        let y = g.soft_argmax(&x, 40.0).unwrap();
        let d = y.to_vec();
        assert!((d[0] - 10.0).abs() < 1e-3, "u = {}", d[0]);
        assert!((d[1] - 20.0).abs() < 1e-3, "v = {}", d[1]);
    }

    #[test]
    fn soft_argmax_uniform_map_is_center() {
        let g = Graph::<f64>::new();
        let x = Tensor::full(&[1, 1, 9, 9], 0.7);
        let y = g.soft_argmax(&x, 10.0).unwrap();
        let d = y.to_vec();
        assert!((d[0] - 4.0).abs() < 1e-9);
        assert!((d[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn global_avg_pool_means() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[1, 2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0]).unwrap();
        let y = g.global_avg_pool(&x).unwrap();
        assert_eq!(y.to_vec(), vec![2.5, 10.0]);
    }
}
