//! Forward and backward kernels for the layer set of the model.
//!
//! Images are `C x H x W`. Convolutions are 3x3, stride 1, zero padded by
//! one pixel so spatial size is preserved; they are lowered to a matrix
//! product over an im2col buffer.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const K: usize = 3;

/// Lowers `C x H x W` into a `(C*9) x (H*W)` row-major column buffer.
pub(crate) fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::zero(); c * K * K * hw];
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = (ch * K + ky) * K + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                // valid output x range so that ix = x + kx - 1 is inside [0, w)
                let x0 = if kx == 0 { 1 } else { 0 };
                let x1 = if kx == 2 { w.saturating_sub(1) } else { w };
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = iy as usize * w;
                    let ix0 = x0 + kx - 1;
                    let n = x1 - x0;
                    dst[y * w + x0..y * w + x1].copy_from_slice(&plane[src_row + ix0..src_row + ix0 + n]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub(crate) fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = (ch * K + ky) * K + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let x0 = if kx == 0 { 1 } else { 0 };
                let x1 = if kx == 2 { w.saturating_sub(1) } else { w };
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = iy as usize * w;
                    let ix0 = x0 + kx - 1;
                    for (d, &s) in plane[dst_row + ix0..dst_row + ix0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&src[y * w + x0..y * w + x1])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (c, h, w) = input.chw()?;
    let (o, wc, kh, kw) = match weight.shape()[..] {
        [o, wc, kh, kw] => (o, wc, kh, kw),
        _ => {
            return Err(Error::shape(
                "conv2d_same",
                format!("weight must be O x C x 3 x 3, got {:?}", weight.shape()),
            ))
        }
    };
    if kh != K || kw != K {
        return Err(Error::shape(
            "conv2d_same",
            format!("kernel must be 3x3, got {kh}x{kw}"),
        ));
    }
    if wc != c {
        return Err(Error::shape(
            "conv2d_same",
            format!("input has {c} channels, weight expects {wc}"),
        ));
    }
    if bias.shape() != [o] {
        return Err(Error::shape(
            "conv2d_same",
            format!("bias must be [{o}], got {:?}", bias.shape()),
        ));
    }
    if h == 0 || w == 0 {
        return Err(Error::shape("conv2d_same", "empty spatial extent"));
    }
    Ok((c, h, w, o))
}

/// Same-size 3x3 convolution; also returns the im2col buffer for backward.
pub(crate) fn conv2d_same_with_cols<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>)> {
    let (c, h, w, o) = conv_dims(input, weight, bias)?;
    let hw = h * w;
    let ck = c * K * K;
    let cols = im2col(input.data(), c, h, w);
    let mut out = vec![T::zero(); o * hw];
    for (row, &b) in out.chunks_mut(hw).zip(bias.data()) {
        row.fill(b);
    }
    T::gemm(
        o,
        ck,
        hw,
        T::one(),
        weight.data(),
        ck,
        1,
        &cols,
        hw,
        1,
        T::one(),
        &mut out,
    );
    Ok((Tensor::from_vec(&[o, h, w], out)?, cols))
}

/// `output[o,y,x] = bias[o] + sum input[c,y+dy-1,x+dx-1] * weight[o,c,dy,dx]`,
/// with out-of-range input read as zero.
pub fn conv2d_same<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    conv2d_same_with_cols(input, weight, bias).map(|(out, _)| out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    grad_out: &[T],
    cols: &[T],
    weight: &Tensor<T>,
    input_chw: (usize, usize, usize),
    need_input: bool,
) -> ConvGrads<T> {
    let (c, h, w) = input_chw;
    let hw = h * w;
    let ck = c * K * K;
    let o = weight.shape()[0];

    let mut gw = vec![T::zero(); o * ck];
    // dW = dOut (o x hw) * cols^T (hw x ck)
    T::gemm(o, hw, ck, T::one(), grad_out, hw, 1, cols, 1, hw, T::zero(), &mut gw);
    let gb = grad_out.chunks(hw).map(|r| r.iter().copied().sum()).collect();

    let input = need_input.then(|| {
        let mut gcols = vec![T::zero(); ck * hw];
        // dCols = W^T (ck x o) * dOut (o x hw)
        T::gemm(
            ck,
            o,
            hw,
            T::one(),
            weight.data(),
            1,
            ck,
            grad_out,
            hw,
            1,
            T::zero(),
            &mut gcols,
        );
        col2im(&gcols, c, h, w)
    });
    ConvGrads {
        input,
        weight: gw,
        bias: gb,
    }
}

fn check_even(op: &'static str, h: usize, w: usize) -> Result<()> {
    if !h.is_multiple_of(2) || !w.is_multiple_of(2) || h == 0 || w == 0 {
        return Err(Error::shape(
            op,
            format!("spatial size {h}x{w} must be even and nonzero"),
        ));
    }
    Ok(())
}

/// 2x2 max pooling, stride 2. The second value holds, per output cell, a
/// bitmask over the window (row-major) of the elements equal to the
/// maximum.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
    let (c, h, w) = input.chw()?;
    check_even("maxpool2", h, w)?;
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let r0 = base + 2 * y * w + 2 * x;
                let window = [src[r0], src[r0 + 1], src[r0 + w], src[r0 + w + 1]];
                let best = window[1..].iter().fold(window[0], |m, &v| if v > m { v } else { m });
                let mask = window
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == best)
                    .fold(0u8, |m, (k, _)| m | 1 << k);
                out.push(best);
                winners.push(mask);
            }
        }
    }
    Ok((Tensor::from_vec(&[c, oh, ow], out)?, winners))
}

/// Routes each output gradient to the window maxima, split equally among
/// ties.
pub(crate) fn maxpool2_backward<T: Scalar>(grad_out: &[T], winners: &[u8], input_chw: (usize, usize, usize)) -> Vec<T> {
    let (c, h, w) = input_chw;
    let (oh, ow) = (h / 2, w / 2);
    let mut g = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let o = (ch * oh + y) * ow + x;
                let mask = winners[o];
                let share = grad_out[o] / T::from_f64_lossy(f64::from(mask.count_ones()));
                let r0 = ch * h * w + 2 * y * w + 2 * x;
                for (k, i) in [r0, r0 + 1, r0 + w, r0 + w + 1].into_iter().enumerate() {
                    if mask & (1 << k) != 0 {
                        g[i] += share;
                    }
                }
            }
        }
    }
    g
}

/// 2x2 average pooling, stride 2.
pub fn avgpool2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw()?;
    check_even("avgpool2", h, w)?;
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let quarter = T::from_f64_lossy(0.25);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            let r0 = base + 2 * y * w;
            let r1 = r0 + w;
            for x in 0..ow {
                let s = src[r0 + 2 * x] + src[r0 + 2 * x + 1] + src[r1 + 2 * x] + src[r1 + 2 * x + 1];
                out.push(s * quarter);
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], out)
}

pub(crate) fn avgpool2_backward<T: Scalar>(grad_out: &[T], input_chw: (usize, usize, usize)) -> Vec<T> {
    let (c, h, w) = input_chw;
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64_lossy(0.25);
    let mut g = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let v = grad_out[(ch * oh + y) * ow + x] * quarter;
                let r0 = ch * h * w + 2 * y * w + 2 * x;
                g[r0] += v;
                g[r0 + 1] += v;
                g[r0 + w] += v;
                g[r0 + w + 1] += v;
            }
        }
    }
    g
}

/// Nearest-neighbour 2x upsampling: each pixel fills a 2x2 block.
pub fn upsample2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw()?;
    let (oh, ow) = (2 * h, 2 * w);
    let src = input.data();
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            let srow = &src[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
            let drow = &mut out[(ch * oh + y) * ow..(ch * oh + y + 1) * ow];
            for (x, d) in drow.iter_mut().enumerate() {
                *d = srow[x / 2];
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], out)
}

/// Block sum: adjoint of [`upsample2`].
pub(crate) fn upsample2_backward<T: Scalar>(grad_out: &[T], input_chw: (usize, usize, usize)) -> Vec<T> {
    let (c, h, w) = input_chw;
    let ow = 2 * w;
    let mut g = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..ow {
                g[(ch * h + y / 2) * w + x / 2] += grad_out[(ch * 2 * h + y) * ow + x];
            }
        }
    }
    g
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Maps the real line onto `[0, 1]` as `(tanh(x) + 1) / 2`.
pub fn bounded_out<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let half = T::from_f64_lossy(0.5);
    x.map(|v| (v.tanh() + T::one()) * half)
}

/// Derivative of [`bounded_out`] expressed through its output `y`:
/// `d/dx (tanh x + 1)/2 = (1 - tanh^2 x)/2 = 2 y (1 - y)`.
pub(crate) fn bounded_out_grad<T: Scalar>(y: T) -> T {
    (T::one() + T::one()) * y * (T::one() - y)
}

/// Mean over all elements of `(pred - target)^2`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    pred.check_same_shape(target, "mse_loss")?;
    if pred.is_empty() {
        return Err(Error::shape("mse_loss", "empty tensors"));
    }
    let s: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(s / T::from_usize(pred.len()).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
    }

    // Direct nested-loop definition of the zero-padded convolution.
    fn conv_oracle(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
        let (c, h, w) = input.chw().unwrap();
        let o = weight.shape()[0];
        let mut out = Tensor::zeros(&[o, h, w]);
        for oc in 0..o {
            for y in 0..h {
                for x in 0..w {
                    let mut s = bias.data()[oc];
                    for ic in 0..c {
                        for dy in 0..3 {
                            for dx in 0..3 {
                                let iy = y as isize + dy as isize - 1;
                                let ix = x as isize + dx as isize - 1;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                s += input.data()[(ic * h + iy as usize) * w + ix as usize]
                                    * weight.data()[((oc * c + ic) * 3 + dy) * 3 + dx];
                            }
                        }
                    }
                    out.data_mut()[(oc * h + y) * w + x] = s;
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let input = Tensor::<f32>::full(&[1, 3, 3], 1.0);
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let out = conv2d_same(&input, &k, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn all_ones_kernel_on_2x2() {
        let input = Tensor::<f64>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let b = Tensor::zeros(&[1]);
        let out = conv2d_same(&input, &k, &b).unwrap();
        // every 3x3 window around a pixel of a 2x2 image covers the whole image
        assert_eq!(out, conv_oracle(&input, &k, &b));
        assert_eq!(out.data(), &[10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = SeededRng::new(3);
        let input = random(&[2, 4, 5], &mut rng);
        let b = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let out = conv2d_same(&input, &Tensor::zeros(&[3, 2, 3, 3]), &b).unwrap();
        for oc in 0..3 {
            assert!(out.channel(oc).unwrap().data().iter().all(|&v| v == b.data()[oc]));
        }
    }

    #[test]
    fn conv_matches_oracle_on_random_shapes() {
        let mut rng = SeededRng::new(11);
        for &(c, h, w, o) in &[(1, 1, 1, 1), (3, 5, 4, 2), (2, 1, 7, 3), (4, 6, 6, 5)] {
            let input = random(&[c, h, w], &mut rng);
            let k = random(&[o, c, 3, 3], &mut rng);
            let b = random(&[o], &mut rng);
            let out = conv2d_same(&input, &k, &b).unwrap();
            let expect = conv_oracle(&input, &k, &b);
            for (a, e) in out.data().iter().zip(expect.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::<f32>::zeros(&[2, 4, 4]);
        let err = conv2d_same(&input, &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1]));
        assert!(matches!(err, Err(Error::Shape { .. })));
        let err = conv2d_same(&input, &Tensor::zeros(&[1, 2, 5, 5]), &Tensor::zeros(&[1]));
        assert!(err.is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = SeededRng::new(5);
        let (c, h, w) = (2, 3, 4);
        let x = random(&[c, h, w], &mut rng);
        let y: Vec<f64> = (0..c * 9 * h * w).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let ax = im2col(x.data(), c, h, w);
        let aty = col2im(&y, c, h, w);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn maxpool_basic() {
        let x = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![0b1000]);
    }

    #[test]
    fn maxpool_ties_share_gradient() {
        let x = Tensor::<f32>::from_vec(&[1, 2, 4], vec![0.7, 0.7, 0.1, 0.2, 0.7, 0.3, 0.7, 0.7]).unwrap();
        let (y, arg) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[0.7, 0.7]);
        assert_eq!(arg, vec![0b0111, 0b1100]);
        let g = maxpool2_backward(&[3.0f32, 1.0], &arg, (1, 2, 4));
        assert_eq!(g, vec![1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn maxpool_matches_window_oracle() {
        let mut rng = SeededRng::new(9);
        let x = random(&[2, 4, 4], &mut rng);
        let (y, _) = maxpool2(&x).unwrap();
        for c in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(x.data()[(c * 4 + 2 * oy + dy) * 4 + 2 * ox + dx]);
                        }
                    }
                    assert_eq!(y.data()[(c * 2 + oy) * 2 + ox], m);
                }
            }
        }
    }

    #[test]
    fn pooling_rejects_odd_sizes() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4]);
        assert!(maxpool2(&x).is_err());
        assert!(avgpool2(&x).is_err());
    }

    #[test]
    fn upsample_replicates() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(upsample2(&x).unwrap().data(), &[1.0; 4]);

        let mut rng = SeededRng::new(2);
        let x = random(&[2, 3, 3], &mut rng);
        let y = upsample2(&x).unwrap();
        assert_eq!(y.shape(), &[2, 6, 6]);
        for c in 0..2 {
            for yy in 0..6 {
                for xx in 0..6 {
                    assert_eq!(y.data()[(c * 6 + yy) * 6 + xx], x.data()[(c * 3 + yy / 2) * 3 + xx / 2]);
                }
            }
        }
    }

    #[test]
    fn upsample_after_pool_restores_blockwise_constant() {
        let x = Tensor::<f32>::from_vec(
            &[1, 4, 4],
            vec![1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.],
        )
        .unwrap();
        let (p, _) = maxpool2(&x).unwrap();
        assert_eq!(upsample2(&p).unwrap(), x);
        assert_eq!(upsample2(&avgpool2(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn activations() {
        let x = Tensor::<f64>::from_vec(&[4], vec![-1.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0, 0.0, 0.0]);
        let b = bounded_out(&Tensor::<f64>::from_vec(&[3], vec![0.0, 50.0, -50.0]).unwrap());
        assert_eq!(b.data()[0], 0.5);
        assert!((b.data()[1] - 1.0).abs() < 1e-6);
        assert!(b.data()[2].abs() < 1e-6);
    }

    #[test]
    fn mse_values() {
        let z = Tensor::<f64>::zeros(&[2]);
        let o = Tensor::<f64>::full(&[2], 1.0);
        assert_eq!(mse_loss(&z, &z).unwrap(), 0.0);
        assert_eq!(mse_loss(&z, &o).unwrap(), 1.0);
        assert!(mse_loss(&z, &Tensor::zeros(&[3])).is_err());

        let mut rng = SeededRng::new(4);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[3, 4], &mut rng);
        let mut s = 0.0;
        for i in 0..12 {
            s += (a.data()[i] - b.data()[i]).powi(2);
        }
        assert!((mse_loss(&a, &b).unwrap() - s / 12.0).abs() < 1e-15);
    }
}
