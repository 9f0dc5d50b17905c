use super::layers::{Ctx, Layer, Mode, Param};
use super::tensor::{add_col_sums, gemm, sigmoid, Tensor};
use super::NnError;
use crate::rng::Rng;

/// Frame geometry of a convolutional recurrence; an LSTM is the 1x1 frame,
/// 1x1 kernel case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

impl Frame {
    pub const POINT: Frame = Frame { height: 1, width: 1, kernel_h: 1, kernel_w: 1 };

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn taps(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    fn is_point(&self) -> bool {
        *self == Frame::POINT
    }
}

/// Patch matrix of `src` (`batch` frames of `pixels x ch`, contiguous) with
/// zero "same" padding: one row per output pixel, columns ordered
/// (ky, kx, channel).
fn im2col(src: &[f64], batch: usize, ch: usize, f: &Frame) -> Vec<f64> {
    let cols = f.taps() * ch;
    let (ph, pw) = ((f.kernel_h - 1) / 2, (f.kernel_w - 1) / 2);
    let mut out = vec![0.0; batch * f.pixels() * cols];
    for b in 0..batch {
        let frame = &src[b * f.pixels() * ch..(b + 1) * f.pixels() * ch];
        for y in 0..f.height {
            for x in 0..f.width {
                let row = &mut out[((b * f.pixels()) + y * f.width + x) * cols..][..cols];
                for ky in 0..f.kernel_h {
                    let sy = (y + ky).wrapping_sub(ph);
                    if sy >= f.height {
                        continue;
                    }
                    for kx in 0..f.kernel_w {
                        let sx = (x + kx).wrapping_sub(pw);
                        if sx >= f.width {
                            continue;
                        }
                        let dst = (ky * f.kernel_w + kx) * ch;
                        let s = (sy * f.width + sx) * ch;
                        row[dst..dst + ch].copy_from_slice(&frame[s..s + ch]);
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto frames.
fn col2im(cols_grad: &[f64], batch: usize, ch: usize, f: &Frame) -> Vec<f64> {
    let cols = f.taps() * ch;
    let (ph, pw) = ((f.kernel_h - 1) / 2, (f.kernel_w - 1) / 2);
    let mut out = vec![0.0; batch * f.pixels() * ch];
    for b in 0..batch {
        let frame = &mut out[b * f.pixels() * ch..(b + 1) * f.pixels() * ch];
        for y in 0..f.height {
            for x in 0..f.width {
                let row = &cols_grad[((b * f.pixels()) + y * f.width + x) * cols..][..cols];
                for ky in 0..f.kernel_h {
                    let sy = (y + ky).wrapping_sub(ph);
                    if sy >= f.height {
                        continue;
                    }
                    for kx in 0..f.kernel_w {
                        let sx = (x + kx).wrapping_sub(pw);
                        if sx >= f.width {
                            continue;
                        }
                        let src = (ky * f.kernel_w + kx) * ch;
                        let d = (sy * f.width + sx) * ch;
                        for c in 0..ch {
                            frame[d + c] += row[src + c];
                        }
                    }
                }
            }
        }
    }
    out
}

struct Cache {
    in_shape: Vec<usize>,
    batch: usize,
    xcols: Vec<Vec<f64>>,
    hcols: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

/// LSTM / ConvLSTM with gates ordered input, forget, candidate, output.
///
/// Input is `[batch, steps, frame..., channels]`; the output is the hidden
/// sequence or, without `return_sequences`, the last hidden state.
pub struct Recurrent {
    pub frame: Frame,
    pub in_ch: usize,
    pub units: usize,
    pub return_sequences: bool,
    conv: bool,
    pub wx: Param,
    pub wh: Param,
    pub b: Param,
    cache: Option<Cache>,
}

impl Recurrent {
    pub fn lstm(in_ch: usize, units: usize, return_sequences: bool, init_std: f64, rng: &mut Rng) -> Self {
        Self::new(Frame::POINT, false, in_ch, units, return_sequences, init_std, rng)
    }

    pub fn conv_lstm(
        frame: Frame,
        in_ch: usize,
        filters: usize,
        return_sequences: bool,
        init_std: f64,
        rng: &mut Rng,
    ) -> Self {
        Self::new(frame, true, in_ch, filters, return_sequences, init_std, rng)
    }

    fn new(
        frame: Frame,
        conv: bool,
        in_ch: usize,
        units: usize,
        return_sequences: bool,
        init_std: f64,
        rng: &mut Rng,
    ) -> Self {
        let g = 4 * units;
        let mut b = Param::zeros("b", vec![g]);
        // Forget gates start open.
        b.value[units..2 * units].fill(1.0);
        Recurrent {
            frame,
            in_ch,
            units,
            return_sequences,
            conv,
            wx: Param::truncated_normal("wx", vec![frame.taps() * in_ch, g], init_std, rng),
            wh: Param::truncated_normal("wh", vec![frame.taps() * units, g], init_std, rng),
            b,
            cache: None,
        }
    }

    fn expected_rank(&self) -> usize {
        if self.conv {
            5
        } else {
            3
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize), NnError> {
        let s = &x.shape;
        let ok = s.len() == self.expected_rank()
            && *s.last().expect("rank checked") == self.in_ch
            && (!self.conv || (s[2] == self.frame.height && s[3] == self.frame.width))
            && s[1] > 0;
        if !ok {
            return Err(NnError::Shape(format!(
                "{} expects [batch, steps, {}{}], got {s:?}",
                self.kind(),
                if !self.conv { String::new() } else { format!("{}, {}, ", self.frame.height, self.frame.width) },
                self.in_ch
            )));
        }
        Ok((s[0], s[1]))
    }
}

impl Layer for Recurrent {
    fn kind(&self) -> &'static str {
        if self.conv {
            "conv_lstm"
        } else {
            "lstm"
        }
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor, NnError> {
        let (batch, steps) = self.check_input(x)?;
        let (u, g, p, c) = (self.units, 4 * self.units, self.frame.pixels(), self.in_ch);
        let rows = batch * p;
        let kx = self.frame.taps() * c;
        let kh = self.frame.taps() * u;
        let train = ctx.mode == Mode::Train;

        let mut h = vec![0.0; rows * u];
        let mut cell = vec![0.0; rows * u];
        let out_per = if self.return_sequences { steps * p * u } else { p * u };
        let mut out = vec![0.0; batch * out_per];
        let mut cache = Cache {
            in_shape: x.shape.clone(),
            batch,
            xcols: Vec::new(),
            hcols: Vec::new(),
            gates: Vec::new(),
            cells: vec![cell.clone()],
            tanh_c: Vec::new(),
        };
        let mut xt = vec![0.0; rows * c];
        for t in 0..steps {
            for b in 0..batch {
                let src = &x.data[(b * steps + t) * p * c..][..p * c];
                xt[b * p * c..(b + 1) * p * c].copy_from_slice(src);
            }
            let xcol = if self.frame.is_point() { xt.clone() } else { im2col(&xt, batch, c, &self.frame) };
            let mut z = vec![0.0; rows * g];
            for row in z.chunks_exact_mut(g) {
                row.copy_from_slice(&self.b.value);
            }
            gemm(rows, kx, g, 1.0, &xcol, false, &self.wx.value, false, 1.0, &mut z);
            let hcol = if t == 0 {
                Vec::new()
            } else {
                let hc = if self.frame.is_point() { h.clone() } else { im2col(&h, batch, u, &self.frame) };
                gemm(rows, kh, g, 1.0, &hc, false, &self.wh.value, false, 1.0, &mut z);
                hc
            };
            let mut tc = vec![0.0; rows * u];
            for r in 0..rows {
                let zr = &mut z[r * g..(r + 1) * g];
                for k in 0..u {
                    let i = sigmoid(zr[k]);
                    let f = sigmoid(zr[u + k]);
                    let cand = zr[2 * u + k].tanh();
                    let o = sigmoid(zr[3 * u + k]);
                    zr[k] = i;
                    zr[u + k] = f;
                    zr[2 * u + k] = cand;
                    zr[3 * u + k] = o;
                    let cn = f * cell[r * u + k] + i * cand;
                    cell[r * u + k] = cn;
                    let th = cn.tanh();
                    tc[r * u + k] = th;
                    h[r * u + k] = o * th;
                }
            }
            if self.return_sequences {
                for b in 0..batch {
                    out[(b * steps + t) * p * u..][..p * u].copy_from_slice(&h[b * p * u..(b + 1) * p * u]);
                }
            }
            if train {
                cache.xcols.push(xcol);
                cache.hcols.push(hcol);
                cache.gates.push(z);
                cache.cells.push(cell.clone());
                cache.tanh_c.push(tc);
            }
        }
        if !self.return_sequences {
            out.copy_from_slice(&h);
        }
        self.cache = train.then_some(cache);

        let mut shape = vec![batch];
        if self.return_sequences {
            shape.push(steps);
        }
        if self.conv {
            shape.extend([self.frame.height, self.frame.width]);
        }
        shape.push(u);
        Tensor::new(shape, out)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache("recurrent"))?;
        let (u, g, p, c) = (self.units, 4 * self.units, self.frame.pixels(), self.in_ch);
        let batch = cache.batch;
        let steps = cache.gates.len();
        let rows = batch * p;
        let kx = self.frame.taps() * c;
        let kh = self.frame.taps() * u;
        let want = if self.return_sequences { batch * steps * p * u } else { batch * p * u };
        if dy.data.len() != want {
            return Err(NnError::Shape("recurrent gradient size".into()));
        }

        let mut dx = vec![0.0; cache.in_shape.iter().product()];
        let mut dh_next = vec![0.0; rows * u];
        let mut dc_next = vec![0.0; rows * u];
        let mut dz = vec![0.0; rows * g];
        for t in (0..steps).rev() {
            let mut dh = dh_next;
            if self.return_sequences {
                for b in 0..batch {
                    let src = &dy.data[(b * steps + t) * p * u..][..p * u];
                    for (d, s) in dh[b * p * u..(b + 1) * p * u].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            } else if t == steps - 1 {
                for (d, s) in dh.iter_mut().zip(&dy.data) {
                    *d += s;
                }
            }
            let gates = &cache.gates[t];
            let c_prev = &cache.cells[t];
            let tc = &cache.tanh_c[t];
            for r in 0..rows {
                let gr = &gates[r * g..(r + 1) * g];
                let dzr = &mut dz[r * g..(r + 1) * g];
                for k in 0..u {
                    let (i, f, cand, o) = (gr[k], gr[u + k], gr[2 * u + k], gr[3 * u + k]);
                    let idx = r * u + k;
                    let th = tc[idx];
                    let dho = dh[idx];
                    let dc = dc_next[idx] + dho * o * (1.0 - th * th);
                    dzr[k] = dc * cand * i * (1.0 - i);
                    dzr[u + k] = dc * c_prev[idx] * f * (1.0 - f);
                    dzr[2 * u + k] = dc * i * (1.0 - cand * cand);
                    dzr[3 * u + k] = dho * th * o * (1.0 - o);
                    dc_next[idx] = dc * f;
                }
            }
            gemm(kx, rows, g, 1.0, &cache.xcols[t], true, &dz, false, 1.0, &mut self.wx.grad);
            add_col_sums(&dz, g, &mut self.b.grad);
            let mut dxcol = vec![0.0; rows * kx];
            gemm(rows, g, kx, 1.0, &dz, false, &self.wx.value, true, 0.0, &mut dxcol);
            let dxt = if self.frame.is_point() { dxcol } else { col2im(&dxcol, batch, c, &self.frame) };
            for b in 0..batch {
                dx[(b * steps + t) * p * c..][..p * c].copy_from_slice(&dxt[b * p * c..(b + 1) * p * c]);
            }
            dh_next = vec![0.0; rows * u];
            if t > 0 {
                gemm(kh, rows, g, 1.0, &cache.hcols[t], true, &dz, false, 1.0, &mut self.wh.grad);
                let mut dhcol = vec![0.0; rows * kh];
                gemm(rows, g, kh, 1.0, &dz, false, &self.wh.value, true, 0.0, &mut dhcol);
                dh_next = if self.frame.is_point() { dhcol } else { col2im(&dhcol, batch, u, &self.frame) };
            }
        }
        Tensor::new(cache.in_shape, dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.wx, &self.wh, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.wx, &mut self.wh, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn im2col_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let f = Frame { height: 5, width: 2, kernel_h: 4, kernel_w: 3 };
        let (batch, ch) = (2, 3);
        let mut rng = rng_from_seed(3);
        let x: Vec<f64> = (0..batch * 10 * ch).map(|_| rng.random::<f64>() - 0.5).collect();
        let cols = im2col(&x, batch, ch, &f);
        let y: Vec<f64> = (0..cols.len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, batch, ch, &f);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn conv_reduces_to_lstm() {
        let mut lstm = Recurrent::lstm(2, 3, true, 0.3, &mut rng_from_seed(5));
        let mut conv = Recurrent::conv_lstm(Frame::POINT, 2, 3, true, 0.3, &mut rng_from_seed(5));
        let mut rng = rng_from_seed(8);
        let data: Vec<f64> = (0..4 * 6 * 2).map(|_| rng.random::<f64>()).collect();
        let a = lstm.forward(&Tensor::new(vec![4, 6, 2], data.clone()).unwrap(), &mut Ctx::infer()).unwrap();
        let b = conv.forward(&Tensor::new(vec![4, 6, 1, 1, 2], data).unwrap(), &mut Ctx::infer()).unwrap();
        assert_eq!(b.shape, vec![4, 6, 1, 1, 3]);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_input_zero_recurrence_gives_zero_input_grad() {
        let mut rng = rng_from_seed(2);
        let mut l = Recurrent::lstm(2, 4, false, 0.1, &mut rng);
        l.wh.value.fill(0.0);
        let x = Tensor::zeros(vec![3, 5, 2]);
        l.forward(&x, &mut Ctx { mode: Mode::Train, rng: None }).unwrap();
        let dy = Tensor::new(vec![3, 4], vec![1.0; 12]).unwrap();
        l.backward(&dy).unwrap();
        assert!(l.wx.grad.iter().all(|g| *g == 0.0));
        assert!(l.b.grad.iter().any(|g| *g != 0.0));
    }
}
