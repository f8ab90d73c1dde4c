use super::{AutodiffError, Tape, Var};

/// Tape handles for one GRU cell's weights.
///
/// `w_*` act on the input, `u_*` on the previous hidden state; `r` is the
/// reset gate, `z` the update gate and `h` the candidate state.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

/// One GRU update:
///
/// ```text
/// r  = σ(W_r x + U_r h + b_r)
/// z  = σ(W_z x + U_z h + b_z)
/// h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h~
/// ```
pub fn gru_cell(tape: &mut Tape<'_>, x: Var, h: Var, w: &GruVars) -> Result<Var, AutodiffError> {
    let gate = |tape: &mut Tape<'_>, wx: Var, uh: Var, b: Var| -> Result<Var, AutodiffError> {
        let a = tape.matmul(wx, x)?;
        let c = tape.matmul(uh, h)?;
        let s = tape.add(a, c)?;
        tape.add(s, b)
    };
    let r_pre = gate(tape, w.w_r, w.u_r, w.b_r)?;
    let r = tape.sigmoid(r_pre)?;
    let z_pre = gate(tape, w.w_z, w.u_z, w.b_z)?;
    let z = tape.sigmoid(z_pre)?;

    let wx = tape.matmul(w.w_h, x)?;
    let rh = tape.mul(r, h)?;
    let urh = tape.matmul(w.u_h, rh)?;
    let cand_pre = tape.add(wx, urh)?;
    let cand_pre = tape.add(cand_pre, w.b_h)?;
    let cand = tape.tanh(cand_pre)?;

    let keep = tape.affine(z, -1.0, 1.0)?;
    let old = tape.mul(keep, h)?;
    let new = tape.mul(z, cand)?;
    tape.add(old, new)
}
