//! One unidirectional LSTM layer: forward pass with cached activations and
//! backpropagation through time.
//!
//! Gate order inside every `4H` block is input, forget, cell candidate, output.
//! There are no peephole connections.

use super::Scalar;

/// Borrowed parameters of one layer direction.
pub(crate) struct LstmParams<'a, T> {
    pub hidden: usize,
    pub input_dim: usize,
    /// `4H x input_dim`, row-major.
    pub w: &'a [T],
    /// `4H x H`, row-major.
    pub u: &'a [T],
    /// `4H`.
    pub b: &'a [T],
}

pub(crate) struct LstmGrads<'a, T> {
    pub w: &'a mut [T],
    pub u: &'a mut [T],
    pub b: &'a mut [T],
}

/// Activations of one layer direction, indexed by absolute frame.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    /// Post-nonlinearity gates, `frames x 4H`.
    pub gates: Vec<T>,
    /// Cell state, `frames x H`.
    pub cell: Vec<T>,
    /// Hidden output, `frames x H`.
    pub hidden: Vec<T>,
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Frame visited at `step` when running in the given direction.
#[inline]
fn frame_at(step: usize, frames: usize, reverse: bool) -> usize {
    if reverse {
        frames - 1 - step
    } else {
        step
    }
}

pub(crate) fn forward<T: Scalar>(
    p: &LstmParams<'_, T>,
    input: &[T],
    frames: usize,
    reverse: bool,
) -> LstmCache<T> {
    let h = p.hidden;
    let g4 = 4 * h;
    let mut gates = vec![T::zero(); frames * g4];
    let mut cell = vec![T::zero(); frames * h];
    let mut hidden = vec![T::zero(); frames * h];

    // Input projection for every frame up front.
    for t in 0..frames {
        let x = &input[t * p.input_dim..(t + 1) * p.input_dim];
        let a = &mut gates[t * g4..(t + 1) * g4];
        for (j, aj) in a.iter_mut().enumerate() {
            *aj = p.b[j] + dot(&p.w[j * p.input_dim..(j + 1) * p.input_dim], x);
        }
    }

    for step in 0..frames {
        let t = frame_at(step, frames, reverse);
        let prev = (step > 0).then(|| frame_at(step - 1, frames, reverse));
        if let Some(pt) = prev {
            let (h_prev, a) = (&hidden[pt * h..(pt + 1) * h], &mut gates[t * g4..(t + 1) * g4]);
            for (j, aj) in a.iter_mut().enumerate() {
                *aj = *aj + dot(&p.u[j * h..(j + 1) * h], h_prev);
            }
        }
        for k in 0..h {
            let base = t * g4;
            let i = sigmoid(gates[base + k]);
            let f = sigmoid(gates[base + h + k]);
            let g = gates[base + 2 * h + k].tanh();
            let o = sigmoid(gates[base + 3 * h + k]);
            gates[base + k] = i;
            gates[base + h + k] = f;
            gates[base + 2 * h + k] = g;
            gates[base + 3 * h + k] = o;
            let c_prev = prev.map_or(T::zero(), |pt| cell[pt * h + k]);
            let c = f * c_prev + i * g;
            cell[t * h + k] = c;
            hidden[t * h + k] = o * c.tanh();
        }
    }
    LstmCache { gates, cell, hidden }
}

/// Accumulates parameter gradients into `grads` and, when `d_input` is given,
/// the gradient with respect to the layer input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Scalar>(
    p: &LstmParams<'_, T>,
    grads: &mut LstmGrads<'_, T>,
    input: &[T],
    frames: usize,
    reverse: bool,
    cache: &LstmCache<T>,
    d_hidden: &[T],
    mut d_input: Option<&mut [T]>,
) {
    let h = p.hidden;
    let g4 = 4 * h;
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let mut da = vec![T::zero(); g4];

    for step in (0..frames).rev() {
        let t = frame_at(step, frames, reverse);
        let prev = (step > 0).then(|| frame_at(step - 1, frames, reverse));
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let c = cache.cell[t * h + k];
            let tc = c.tanh();
            let dh = d_hidden[t * h + k] + dh_next[k];
            let dc = dh * o * (T::one() - tc * tc) + dc_next[k];
            let c_prev = prev.map_or(T::zero(), |pt| cache.cell[pt * h + k]);
            da[k] = dc * g * i * (T::one() - i);
            da[h + k] = dc * c_prev * f * (T::one() - f);
            da[2 * h + k] = dc * i * (T::one() - g * g);
            da[3 * h + k] = dh * tc * o * (T::one() - o);
            dc_next[k] = dc * f;
        }

        let x = &input[t * p.input_dim..(t + 1) * p.input_dim];
        for (j, &daj) in da.iter().enumerate() {
            grads.b[j] = grads.b[j] + daj;
            axpy(daj, x, &mut grads.w[j * p.input_dim..(j + 1) * p.input_dim]);
        }
        if let Some(dx_all) = d_input.as_deref_mut() {
            let dx = &mut dx_all[t * p.input_dim..(t + 1) * p.input_dim];
            for (j, &daj) in da.iter().enumerate() {
                axpy(daj, &p.w[j * p.input_dim..(j + 1) * p.input_dim], dx);
            }
        }
        dh_next.iter_mut().for_each(|v| *v = T::zero());
        if let Some(pt) = prev {
            let h_prev = &cache.hidden[pt * h..(pt + 1) * h];
            for (j, &daj) in da.iter().enumerate() {
                axpy(daj, h_prev, &mut grads.u[j * h..(j + 1) * h]);
                axpy(daj, &p.u[j * h..(j + 1) * h], &mut dh_next);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_matches_hand_evaluated_gates() {
        // One hidden unit, one input, one frame: h = o * tanh(i * g).
        let w = [0.5f64, -0.3, 0.8, 0.2];
        let b = [0.1f64, 1.0, -0.2, 0.05];
        let u = [0.7f64, 0.1, -0.4, 0.9];
        let x = 0.6f64;
        let p = LstmParams {
            hidden: 1,
            input_dim: 1,
            w: &w,
            u: &u,
            b: &b,
        };
        let cache = forward(&p, &[x], 1, false);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * 0.6 + 0.1);
        let g = (0.8f64 * 0.6 - 0.2).tanh();
        let o = sig(0.2 * 0.6 + 0.05);
        let c = i * g;
        assert!((cache.cell[0] - c).abs() < 1e-15);
        assert!((cache.hidden[0] - o * c.tanh()).abs() < 1e-15);

        // Second frame picks up the recurrent term and the forget gate.
        let cache2 = forward(&p, &[x, -x], 2, false);
        let h0 = o * c.tanh();
        let i1 = sig(0.5 * -0.6 + 0.1 + 0.7 * h0);
        let f1 = sig(-0.3 * -0.6 + 1.0 + 0.1 * h0);
        let g1 = (0.8 * -0.6 - 0.2 - 0.4 * h0).tanh();
        let o1 = sig(0.2 * -0.6 + 0.05 + 0.9 * h0);
        let c1 = f1 * c + i1 * g1;
        assert!((cache2.hidden[1] - o1 * c1.tanh()).abs() < 1e-15);
    }

    #[test]
    fn reverse_direction_is_forward_on_reversed_input() {
        let (hidden, input_dim, frames) = (3, 2, 5);
        let w: Vec<f64> = (0..4 * hidden * input_dim).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
        let u: Vec<f64> = (0..4 * hidden * hidden).map(|i| ((i * 5 % 13) as f64 - 6.0) / 12.0).collect();
        let b: Vec<f64> = (0..4 * hidden).map(|i| (i as f64 - 6.0) / 20.0).collect();
        let p = LstmParams {
            hidden,
            input_dim,
            w: &w,
            u: &u,
            b: &b,
        };
        let x: Vec<f64> = (0..frames * input_dim).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x_rev = Vec::new();
        for t in (0..frames).rev() {
            x_rev.extend_from_slice(&x[t * input_dim..(t + 1) * input_dim]);
        }
        let back = forward(&p, &x, frames, true);
        let fwd_on_rev = forward(&p, &x_rev, frames, false);
        for t in 0..frames {
            let a = &back.hidden[t * hidden..(t + 1) * hidden];
            let r = frames - 1 - t;
            let b = &fwd_on_rev.hidden[r * hidden..(r + 1) * hidden];
            assert_eq!(a, b);
        }
    }
}
