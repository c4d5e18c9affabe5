use super::{Result, Tensor, TensorError};

/// Gradients of [`conv2d`] with respect to each of its inputs.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(input: &Tensor, weights: &Tensor, bias_len: usize, padding: usize) -> Result<ConvGeometry> {
    let (cin, h, w) = input.dims3()?;
    let &[cout, wcin, kh, kw] = weights.shape() else {
        return Err(TensorError::Shape(format!(
            "conv weights must be [Cout, Cin, k, k], got {:?}",
            weights.shape()
        )));
    };
    if kh != kw {
        return Err(TensorError::Shape(format!("kernel must be square, got {kh}x{kw}")));
    }
    if kh % 2 == 0 {
        return Err(TensorError::Param(format!("kernel size must be odd, got {kh}")));
    }
    if wcin != cin {
        return Err(TensorError::Shape(format!(
            "kernel expects {wcin} input channels, input has {cin}"
        )));
    }
    if bias_len != cout {
        return Err(TensorError::Shape(format!(
            "bias has {bias_len} entries for {cout} output channels"
        )));
    }
    let (oh, ow) = (h + 2 * padding + 1, w + 2 * padding + 1);
    if oh <= kh || ow <= kh {
        return Err(TensorError::Shape(format!(
            "{kh}x{kh} kernel does not fit {h}x{w} input with padding {padding}"
        )));
    }
    Ok(ConvGeometry {
        cin,
        h,
        w,
        cout,
        k: kh,
        pad: padding,
        oh: oh - kh,
        ow: ow - kh,
    })
}

/// 2-D cross-correlation over a zero-padded `[Cin, H, W]` input.
///
/// Output is `[Cout, H + 2p - k + 1, W + 2p - k + 1]`.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &[f64], padding: usize) -> Result<Tensor> {
    let g = conv_geometry(input, weights, bias.len(), padding)?;
    let (x, wt) = (input.data(), weights.data());
    let mut out = vec![0.0; g.cout * g.oh * g.ow];
    for o in 0..g.cout {
        let plane = &mut out[o * g.oh * g.ow..(o + 1) * g.oh * g.ow];
        plane.fill(bias[o]);
        for c in 0..g.cin {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = wt[((o * g.cin + c) * g.k + ky) * g.k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let iy = oy + ky;
                        if iy < g.pad || iy - g.pad >= g.h {
                            continue;
                        }
                        let row = &x[(c * g.h + iy - g.pad) * g.w..(c * g.h + iy - g.pad + 1) * g.w];
                        let orow = &mut plane[oy * g.ow..(oy + 1) * g.ow];
                        // valid ox: 0 <= ox + kx - pad < w
                        let lo = g.pad.saturating_sub(kx);
                        let hi = (g.w + g.pad).saturating_sub(kx).min(g.ow);
                        for ox in lo..hi {
                            orow[ox] += wv * row[ox + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.cout, g.oh, g.ow], out))
}

pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    padding: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let cout = weights.shape().first().copied().unwrap_or(0);
    let g = conv_geometry(input, weights, cout, padding)?;
    if grad_out.shape() != [g.cout, g.oh, g.ow] {
        return Err(TensorError::Shape(format!(
            "upstream gradient {:?} does not match conv output [{}, {}, {}]",
            grad_out.shape(),
            g.cout,
            g.oh,
            g.ow
        )));
    }
    let (x, wt, go) = (input.data(), weights.data(), grad_out.data());
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; g.cout];
    for o in 0..g.cout {
        let gplane = &go[o * g.oh * g.ow..(o + 1) * g.oh * g.ow];
        gb[o] = gplane.iter().sum();
        for c in 0..g.cin {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let widx = ((o * g.cin + c) * g.k + ky) * g.k + kx;
                    let wv = wt[widx];
                    let mut acc = 0.0;
                    for oy in 0..g.oh {
                        let iy = oy + ky;
                        if iy < g.pad || iy - g.pad >= g.h {
                            continue;
                        }
                        let base = (c * g.h + iy - g.pad) * g.w;
                        let lo = g.pad.saturating_sub(kx);
                        let hi = (g.w + g.pad).saturating_sub(kx).min(g.ow);
                        for ox in lo..hi {
                            let gv = gplane[oy * g.ow + ox];
                            let xi = base + ox + kx - g.pad;
                            acc += gv * x[xi];
                            gx[xi] += gv * wv;
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_parts(input.shape().to_vec(), gx),
        weights: Tensor::from_parts(weights.shape().to_vec(), gw),
        bias: gb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolScope {
    /// One value per channel: `[C, H, W] -> [C]`.
    GlobalSpatial,
    /// One value per pixel across channels: `[C, H, W] -> [1, H, W]`.
    PerPixelOverChannels,
    /// Sliding `k×k` window, stride 1, padding `k/2`: shape preserving.
    /// Cells outside the input never take part in the reduction.
    Window(usize),
}

/// Index of the first maximum; ties keep the earliest element.
fn argmax_by(indices: impl Iterator<Item = usize>, x: &[f64]) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for i in indices {
        if best == usize::MAX || x[i] > best_v {
            best = i;
            best_v = x[i];
        }
    }
    best
}

fn check_pool(input: &Tensor, scope: PoolScope) -> Result<(usize, usize, usize)> {
    let (c, h, w) = input.dims3()?;
    if input.is_empty() {
        return Err(TensorError::Shape(format!("cannot pool empty tensor {:?}", input.shape())));
    }
    if let PoolScope::Window(k) = scope {
        if k % 2 == 0 {
            return Err(TensorError::Param(format!("pool window must be odd, got {k}")));
        }
    }
    Ok((c, h, w))
}

fn window(y: usize, x: usize, h: usize, w: usize, r: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    (y.saturating_sub(r)..(y + r + 1).min(h), x.saturating_sub(r)..(x + r + 1).min(w))
}

pub fn pool(input: &Tensor, mode: PoolMode, scope: PoolScope) -> Result<Tensor> {
    let (c, h, w) = check_pool(input, scope)?;
    let x = input.data();
    let hw = h * w;
    let out = match scope {
        PoolScope::GlobalSpatial => {
            let data = (0..c)
                .map(|ch| {
                    let plane = &x[ch * hw..(ch + 1) * hw];
                    match mode {
                        PoolMode::Avg => plane.iter().sum::<f64>() / hw as f64,
                        PoolMode::Max => plane.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }
                })
                .collect();
            Tensor::from_parts(vec![c], data)
        }
        PoolScope::PerPixelOverChannels => {
            let data = (0..hw)
                .map(|p| match mode {
                    PoolMode::Avg => (0..c).map(|ch| x[ch * hw + p]).sum::<f64>() / c as f64,
                    PoolMode::Max => (0..c).map(|ch| x[ch * hw + p]).fold(f64::NEG_INFINITY, f64::max),
                })
                .collect();
            Tensor::from_parts(vec![1, h, w], data)
        }
        PoolScope::Window(k) => {
            let r = k / 2;
            let mut data = vec![0.0; x.len()];
            for ch in 0..c {
                let plane = &x[ch * hw..(ch + 1) * hw];
                for y in 0..h {
                    for xx in 0..w {
                        let (ys, xs) = window(y, xx, h, w, r);
                        let mut acc = match mode {
                            PoolMode::Avg => 0.0,
                            PoolMode::Max => f64::NEG_INFINITY,
                        };
                        let n = ys.len() * xs.len();
                        for yy in ys {
                            for v in &plane[yy * w + xs.start..yy * w + xs.end] {
                                acc = match mode {
                                    PoolMode::Avg => acc + v,
                                    PoolMode::Max => acc.max(*v),
                                };
                            }
                        }
                        data[ch * hw + y * w + xx] = match mode {
                            PoolMode::Avg => acc / n as f64,
                            PoolMode::Max => acc,
                        };
                    }
                }
            }
            Tensor::from_parts(vec![c, h, w], data)
        }
    };
    Ok(out)
}

/// Routes `grad_out` back through [`pool`]. Max routes to the first maximal
/// element of each reduction.
pub fn pool_backward(input: &Tensor, mode: PoolMode, scope: PoolScope, grad_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = check_pool(input, scope)?;
    let x = input.data();
    let hw = h * w;
    let expected: Vec<usize> = match scope {
        PoolScope::GlobalSpatial => vec![c],
        PoolScope::PerPixelOverChannels => vec![1, h, w],
        PoolScope::Window(_) => vec![c, h, w],
    };
    if grad_out.shape() != expected.as_slice() {
        return Err(TensorError::Shape(format!(
            "upstream gradient {:?} does not match pool output {expected:?}",
            grad_out.shape()
        )));
    }
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    match scope {
        PoolScope::GlobalSpatial => {
            for ch in 0..c {
                match mode {
                    PoolMode::Avg => {
                        let share = g[ch] / hw as f64;
                        gx[ch * hw..(ch + 1) * hw].iter_mut().for_each(|v| *v += share);
                    }
                    PoolMode::Max => {
                        let i = argmax_by(ch * hw..(ch + 1) * hw, x);
                        gx[i] += g[ch];
                    }
                }
            }
        }
        PoolScope::PerPixelOverChannels => {
            for p in 0..hw {
                match mode {
                    PoolMode::Avg => {
                        let share = g[p] / c as f64;
                        (0..c).for_each(|ch| gx[ch * hw + p] += share);
                    }
                    PoolMode::Max => {
                        let i = argmax_by((0..c).map(|ch| ch * hw + p), x);
                        gx[i] += g[p];
                    }
                }
            }
        }
        PoolScope::Window(k) => {
            let r = k / 2;
            for ch in 0..c {
                let off = ch * hw;
                for y in 0..h {
                    for xx in 0..w {
                        let gv = g[off + y * w + xx];
                        let (ys, xs) = window(y, xx, h, w, r);
                        match mode {
                            PoolMode::Avg => {
                                let share = gv / (ys.len() * xs.len()) as f64;
                                for yy in ys {
                                    for xi in xs.clone() {
                                        gx[off + yy * w + xi] += share;
                                    }
                                }
                            }
                            PoolMode::Max => {
                                let cells = ys.flat_map(|yy| xs.clone().map(move |xi| off + yy * w + xi));
                                let i = argmax_by(cells, x);
                                gx[i] += gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(input.shape().to_vec(), gx))
}

/// Smallest and largest doubles strictly inside (0, 1).
const SIGMOID_LO: f64 = f64::MIN_POSITIVE;
const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, saturating at the nearest representable values inside
/// the open unit interval.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_LO, SIGMOID_HI)
}

pub fn sigmoid_map(input: &Tensor) -> Tensor {
    input.map(sigmoid)
}

/// Backward of [`sigmoid_map`] given its *output*.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(TensorError::Shape(format!(
            "sigmoid output {:?} vs gradient {:?}",
            output.shape(),
            grad_out.shape()
        )));
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(s, g)| g * s * (1.0 - s))
        .collect();
    Ok(Tensor::from_parts(output.shape().to_vec(), data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineOp {
    Mul,
    Add,
    ConcatChannels,
}

/// How an operand indexes into the `[C, H, W]` result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Operand {
    Full,
    /// `[C]` or `[C, 1, 1]`: flat index / (H·W).
    Channel,
    /// `[1, H, W]`: flat index mod (H·W).
    Plane,
}

impl Operand {
    fn index(self, i: usize, hw: usize) -> usize {
        match self {
            Operand::Full => i,
            Operand::Channel => i / hw,
            Operand::Plane => i % hw,
        }
    }
}

fn classify(full: &[usize], other: &[usize]) -> Option<Operand> {
    let &[c, h, w] = full else { return None };
    if other == full {
        Some(Operand::Full)
    } else if other == [c] || other == [c, 1, 1] {
        Some(Operand::Channel)
    } else if other == [1, h, w] {
        Some(Operand::Plane)
    } else {
        None
    }
}

/// Resolves operand roles; the result shape is whichever side is `[C, H, W]`.
fn broadcast(a: &Tensor, b: &Tensor) -> Result<(Vec<usize>, Operand, Operand)> {
    if a.shape() == b.shape() {
        return Ok((a.shape().to_vec(), Operand::Full, Operand::Full));
    }
    if a.shape().len() == 3 {
        if let Some(kind) = classify(a.shape(), b.shape()) {
            return Ok((a.shape().to_vec(), Operand::Full, kind));
        }
    }
    if b.shape().len() == 3 {
        if let Some(kind) = classify(b.shape(), a.shape()) {
            return Ok((b.shape().to_vec(), kind, Operand::Full));
        }
    }
    Err(TensorError::Shape(format!(
        "cannot broadcast {:?} with {:?}",
        a.shape(),
        b.shape()
    )))
}

fn concat_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (ca, ha, wa) = a.dims3()?;
    let (cb, hb, wb) = b.dims3()?;
    if (ha, wa) != (hb, wb) {
        return Err(TensorError::Shape(format!(
            "concat needs equal spatial dims, got {ha}x{wa} and {hb}x{wb}"
        )));
    }
    Ok((ca, cb, ha, wa))
}

/// Elementwise product/sum with the two supported broadcasts (channel vector
/// over H×W, single plane over C), or channel concatenation.
pub fn combine(a: &Tensor, b: &Tensor, op: CombineOp) -> Result<Tensor> {
    match op {
        CombineOp::ConcatChannels => {
            let (ca, cb, h, w) = concat_dims(a, b)?;
            let mut data = Vec::with_capacity(a.len() + b.len());
            data.extend_from_slice(a.data());
            data.extend_from_slice(b.data());
            Ok(Tensor::from_parts(vec![ca + cb, h, w], data))
        }
        CombineOp::Mul | CombineOp::Add => {
            let (shape, ka, kb) = broadcast(a, b)?;
            let hw = if shape.len() == 3 { shape[1] * shape[2] } else { 1 };
            let n: usize = shape.iter().product();
            let (x, y) = (a.data(), b.data());
            let data = (0..n)
                .map(|i| {
                    let (u, v) = (x[ka.index(i, hw)], y[kb.index(i, hw)]);
                    if op == CombineOp::Mul {
                        u * v
                    } else {
                        u + v
                    }
                })
                .collect();
            Ok(Tensor::from_parts(shape, data))
        }
    }
}

/// Gradients of [`combine`] with respect to `a` and `b`; broadcast operands
/// receive the reduced gradient.
pub fn combine_backward(a: &Tensor, b: &Tensor, op: CombineOp, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    match op {
        CombineOp::ConcatChannels => {
            let (ca, cb, h, w) = concat_dims(a, b)?;
            if grad_out.shape() != [ca + cb, h, w] {
                return Err(TensorError::Shape(format!(
                    "upstream gradient {:?} does not match concat output",
                    grad_out.shape()
                )));
            }
            let (ga, gb) = grad_out.data().split_at(a.len());
            Ok((
                Tensor::from_parts(a.shape().to_vec(), ga.to_vec()),
                Tensor::from_parts(b.shape().to_vec(), gb.to_vec()),
            ))
        }
        CombineOp::Mul | CombineOp::Add => {
            let (shape, ka, kb) = broadcast(a, b)?;
            if grad_out.shape() != shape.as_slice() {
                return Err(TensorError::Shape(format!(
                    "upstream gradient {:?} does not match output {shape:?}",
                    grad_out.shape()
                )));
            }
            let hw = if shape.len() == 3 { shape[1] * shape[2] } else { 1 };
            let (x, y, g) = (a.data(), b.data(), grad_out.data());
            let mut ga = vec![0.0; x.len()];
            let mut gb = vec![0.0; y.len()];
            for (i, gv) in g.iter().enumerate() {
                let (ia, ib) = (ka.index(i, hw), kb.index(i, hw));
                if op == CombineOp::Mul {
                    ga[ia] += gv * y[ib];
                    gb[ib] += gv * x[ia];
                } else {
                    ga[ia] += gv;
                    gb[ib] += gv;
                }
            }
            Ok((
                Tensor::from_parts(a.shape().to_vec(), ga),
                Tensor::from_parts(b.shape().to_vec(), gb),
            ))
        }
    }
}
