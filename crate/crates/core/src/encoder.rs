//! Single-layer GRU encoder with masking on the output edge only.
//!
//! The recurrent state `h` is always carried forward unmasked; the mask is
//! applied to the copy of `h` that leaves the layer at each timestep.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Weights of one GRU layer. `w_*` are `input × hidden`, `u_*` are
/// `hidden × hidden`, biases have length `hidden`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

pub const GRU_BLOCKS: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

impl GruParams {
    /// Weights drawn from `uniform(-scale, scale)`, biases zero.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut w = || Tensor::uniform(&[input, hidden], scale, rng);
        let (w_z, w_r, w_h) = (w(), w(), w());
        let mut u = || Tensor::uniform(&[hidden, hidden], scale, rng);
        let (u_z, u_r, u_h) = (u(), u(), u());
        GruParams {
            w_z,
            u_z,
            b_z: Tensor::zeros(&[hidden]),
            w_r,
            u_r,
            b_r: Tensor::zeros(&[hidden]),
            w_h,
            u_h,
            b_h: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[input, hidden]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        GruParams {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.b_z.len()
    }

    /// Parameter blocks in [`GRU_BLOCKS`] order.
    pub fn blocks(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h,
            &self.u_h, &self.b_h,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (d, n) = (self.input_dim(), self.hidden());
        for (name, t) in GRU_BLOCKS.iter().zip(self.blocks()) {
            let want: &[usize] = match name.as_bytes()[0] {
                b'w' => &[d, n],
                b'u' => &[n, n],
                _ => &[n],
            };
            if t.shape() != want {
                return Err(Error::Shape(format!(
                    "{name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Domain(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Puts every block on the tape, as parameters or as constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> GruVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        GruVars {
            w_z: put(&self.w_z),
            u_z: put(&self.u_z),
            b_z: put(&self.b_z),
            w_r: put(&self.w_r),
            u_r: put(&self.u_r),
            b_r: put(&self.b_r),
            w_h: put(&self.w_h),
            u_h: put(&self.u_h),
            b_h: put(&self.b_h),
        }
    }
}

/// Tape handles for a registered [`GruParams`].
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl GruVars {
    pub fn blocks(&self) -> [Var; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h,
            self.b_h,
        ]
    }
}

/// Mask applied to the layer output at every timestep.
#[derive(Clone, Copy, Debug)]
pub enum OutputMask<'a> {
    None,
    /// One task mask shared by every row of the batch.
    Task(&'a [u8]),
    /// One mask per row (`batch × hidden` entries), scaled by `scale` where kept.
    PerSample { mask: &'a [u8], scale: f64 },
}

/// One GRU step on a batch: `x` is `[batch × input]`, `h_prev` is
/// `[batch × hidden]`.
///
/// `z = σ(x·W_z + h·U_z + b_z)`, `r = σ(x·W_r + h·U_r + b_r)`,
/// `h̃ = tanh(x·W_h + (r⊙h)·U_h + b_h)`, `h' = h + z⊙(h̃ − h)`.
pub fn gru_cell_step(tape: &mut Tape, p: &GruVars, x: Var, h_prev: Var) -> Result<Var> {
    let batch = tape.value(x).shape().first().copied().unwrap_or(0);
    if tape.value(h_prev).shape() != [batch, tape.value(p.b_z).len()] {
        return Err(Error::Shape(format!(
            "hidden state {:?} does not match batch {batch} and width {}",
            tape.value(h_prev).shape(),
            tape.value(p.b_z).len()
        )));
    }
    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, hin: Var| -> Result<Var> {
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(hin, u)?;
        let s = tape.add(xw, hu)?;
        tape.add(s, b)
    };
    let z_pre = gate(tape, p.w_z, p.u_z, p.b_z, h_prev)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = gate(tape, p.w_r, p.u_r, p.b_r, h_prev)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul(r, h_prev)?;
    let c_pre = gate(tape, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = tape.tanh(c_pre)?;
    let delta = tape.sub(cand, h_prev)?;
    let step = tape.mul(z, delta)?;
    tape.add(h_prev, step)
}

/// Tape handles for an unrolled sequence.
#[derive(Clone, Debug)]
pub struct GruOutput {
    /// Recurrent states `h_1..h_n`, never masked.
    pub hidden: Vec<Var>,
    /// Layer outputs `y'_i = h_i ⊙ mask`.
    pub outputs: Vec<Var>,
}

impl GruOutput {
    pub fn final_output(&self) -> Var {
        *self.outputs.last().expect("non-empty sequence")
    }
}

/// Unrolls the GRU over `inputs` (one `[batch × input]` var per timestep)
/// from `h_0 = 0`, masking only the emitted outputs.
pub fn encode_sequence(
    tape: &mut Tape,
    params: &GruVars,
    inputs: &[Var],
    mask: OutputMask<'_>,
) -> Result<GruOutput> {
    let Some(first) = inputs.first() else {
        return Err(Error::Domain("cannot encode an empty sequence".into()));
    };
    let batch = tape.value(*first).shape()[0];
    let hidden_width = tape.value(params.b_z).len();
    match mask {
        OutputMask::Task(m) if m.len() != hidden_width => {
            return Err(Error::Shape(format!(
                "task mask length {} does not match hidden width {hidden_width}",
                m.len()
            )))
        }
        OutputMask::PerSample { mask: m, .. } if m.len() != batch * hidden_width => {
            return Err(Error::Shape(format!(
                "per-sample mask has {} entries, expected {}",
                m.len(),
                batch * hidden_width
            )))
        }
        _ => {}
    }
    let mut h = tape.constant(Tensor::zeros(&[batch, hidden_width]));
    let mut out = GruOutput {
        hidden: Vec::with_capacity(inputs.len()),
        outputs: Vec::with_capacity(inputs.len()),
    };
    for &x in inputs {
        h = gru_cell_step(tape, params, x, h)?;
        let y = match mask {
            OutputMask::None => h,
            OutputMask::Task(m) => tape.apply_mask(h, m, 1.0)?,
            OutputMask::PerSample { mask: m, scale } => tape.apply_mask(h, m, scale)?,
        };
        out.hidden.push(h);
        out.outputs.push(y);
    }
    Ok(out)
}

/// Values of an unrolled sequence, without gradient tracking.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub hidden: Vec<Tensor>,
    pub outputs: Vec<Tensor>,
}

impl GruParams {
    /// Encodes one sequence `x` of shape `[n × input]`.
    pub fn encode(&self, x: &Tensor, mask: Option<&[u8]>) -> Result<EncodedSequence> {
        if x.shape().len() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::Shape(format!(
                "sequence must be [n × {}], got {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let inputs: Vec<Var> = (0..x.shape()[0])
            .map(|i| tape.constant(Tensor::new(vec![1, x.shape()[1]], x.row(i).to_vec()).unwrap()))
            .collect();
        let mask = mask.map_or(OutputMask::None, OutputMask::Task);
        let out = encode_sequence(&mut tape, &vars, &inputs, mask)?;
        let grab = |vs: &[Var]| -> Vec<Tensor> {
            vs.iter()
                .map(|&v| tape.value(v).clone().reshape(vec![self.hidden()]).unwrap())
                .collect()
        };
        Ok(EncodedSequence {
            hidden: grab(&out.hidden),
            outputs: grab(&out.outputs),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;
    use crate::rng;
    use rand::SeedableRng;

    fn params(seed: u64, d: usize, n: usize, scale: f64) -> GruParams {
        GruParams::init(d, n, scale, &mut rng::Rng::seed_from_u64(seed))
    }

    fn seq(seed: u64, len: usize, d: usize) -> Tensor {
        Tensor::uniform(&[len, d], 1.0, &mut rng::Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let p = params(1, 3, 4, 0.5);
        let out = p.encode(&Tensor::zeros(&[1, 3]), None).unwrap();
        assert!(out.hidden[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_update_gate_copies_state() {
        let mut p = params(2, 3, 4, 0.5);
        p.b_z = Tensor::filled(&[4], -50.0);
        let x = seq(3, 5, 3);
        let out = p.encode(&x, None).unwrap();
        // h_0 = 0 and z ≈ 0 keep every state near zero.
        for h in &out.hidden {
            assert!(h.data().iter().all(|v| v.abs() < 1e-15));
        }

        let mut tape = Tape::new();
        let vars = p.register(&mut tape, false);
        let xi = tape.constant(Tensor::matrix(1, 3, vec![0.3, -0.2, 0.9]).unwrap());
        let hp = tape.constant(Tensor::matrix(1, 4, vec![0.5, -0.4, 0.1, 0.7]).unwrap());
        let h = gru_cell_step(&mut tape, &vars, xi, hp).unwrap();
        for (a, b) in tape.value(h).data().iter().zip(tape.value(hp).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masking_leaves_recurrence_untouched() {
        let p = params(4, 3, 5, 0.5);
        let x = seq(5, 6, 3);
        let free = p.encode(&x, None).unwrap();
        let ones = p.encode(&x, Some(&[1; 5])).unwrap();
        assert_eq!(free, ones);
        let zeros = p.encode(&x, Some(&[0; 5])).unwrap();
        assert_eq!(zeros.hidden, free.hidden);
        assert!(zeros.outputs.iter().flat_map(|t| t.data()).all(|&v| v == 0.0));
        let part = p.encode(&x, Some(&[1, 0, 1, 0, 0])).unwrap();
        assert_eq!(part.hidden, free.hidden);
        for (y, h) in part.outputs.iter().zip(&free.hidden) {
            assert_eq!(y.data()[0], h.data()[0]);
            assert_eq!(y.data()[1], 0.0);
        }
    }

    #[test]
    fn rejects_empty_sequence_and_bad_mask() {
        let p = params(6, 3, 4, 0.5);
        assert!(matches!(
            p.encode(&Tensor::zeros(&[0, 3]), None),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            p.encode(&Tensor::zeros(&[2, 3]), Some(&[1, 1])),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            p.encode(&Tensor::zeros(&[2, 4]), None),
            Err(Error::Shape(_))
        ));
    }

    fn flatten(p: &GruParams) -> Vec<f64> {
        p.blocks().iter().flat_map(|t| t.data().to_vec()).collect()
    }

    fn unflatten(template: &GruParams, flat: &[f64]) -> GruParams {
        let mut p = template.clone();
        let mut off = 0;
        for t in p.blocks_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        p
    }

    /// Loss `Σ c ⊙ y'_n` over a small batch, with fixed random weights `c`.
    fn step_loss(p: &GruParams, xs: &[Tensor], mask: &[u8], coef: &Tensor) -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let vars = p.register(&mut tape, true);
        let inputs: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = encode_sequence(&mut tape, &vars, &inputs, OutputMask::Task(mask)).unwrap();
        let c = tape.constant(coef.clone());
        let weighted = tape.mul(out.final_output(), c).unwrap();
        let loss = tape.sum(weighted).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = vars.blocks().iter().flat_map(|&v| grads.get(v).into_data()).collect();
        (tape.value(loss).data()[0], g)
    }

    #[test]
    fn all_blocks_match_finite_differences() {
        let mut p = params(7, 3, 4, 0.5);
        for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h] {
            *b = Tensor::uniform(&[4], 0.3, &mut rng::Rng::seed_from_u64(8));
        }
        let mut r = rng::Rng::seed_from_u64(9);
        let xs: Vec<Tensor> = (0..3).map(|_| Tensor::uniform(&[2, 3], 1.0, &mut r)).collect();
        let coef = Tensor::uniform(&[2, 4], 1.0, &mut r);
        let mask = [1, 0, 1, 1];
        let err = finite_difference_check(
            |flat| step_loss(&unflatten(&p, flat), &xs, &mask, &coef),
            &flatten(&p),
            1e-5,
        );
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn masked_unit_still_learns_through_recurrence() {
        // Two steps, two units; unit 0 is masked. Its input weights still get
        // gradient because h_1[0] feeds h_2[1] through U.
        let p = params(10, 2, 2, 0.8);
        let xs = vec![
            Tensor::matrix(1, 2, vec![0.7, -0.3]).unwrap(),
            Tensor::matrix(1, 2, vec![0.2, 0.5]).unwrap(),
        ];
        let coef = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        let mask = [0u8, 1];
        let (_, g) = step_loss(&p, &xs, &mask, &coef);
        let w_z_grad = &g[..4];
        // Column 0 of W_z drives only the masked unit.
        assert!(w_z_grad[0] != 0.0 || w_z_grad[2] != 0.0);

        // With a single step there is no recurrent path, so column 0 is zero.
        let (_, g1) = step_loss(&p, &xs[..1], &mask, &coef);
        assert_eq!(g1[0], 0.0);
        assert_eq!(g1[2], 0.0);
        assert!(g1[1] != 0.0);
    }
}
