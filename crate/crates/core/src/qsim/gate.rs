//! SU(4) two-qubit gates in a 15-parameter KAK-style factorization.
//!
//! A gate is `U = (A1 ⊗ A2) · N(θx, θy, θz) · (B1 ⊗ B2)` where every
//! single-qubit factor is an Euler triple `Rz(φ) Ry(ϑ) Rz(ω)` and the core
//! is `N = exp(-i (θx X⊗X + θy Y⊗Y + θz Z⊗Z))`. The three interaction
//! terms commute, so `N` factorizes into three closed-form rotations and
//! every factor has an analytic derivative. All-zero parameters give the
//! identity.
//!
//! Parameter order within a gate (15 reals):
//! `[B1 φϑω, B2 φϑω, θx, θy, θz, A1 φϑω, A2 φϑω]`
//! i.e. factors listed in the order they hit the state.

use num_complex::Complex64;

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat4 = [[Complex64; 4]; 4];

/// Number of real parameters per SU(4) gate.
pub const SU4_PARAMS: usize = 15;

/// The 15 real angles of one two-qubit gate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su4Params(pub [f64; SU4_PARAMS]);

impl Su4Params {
    pub fn from_slice(p: &[f64]) -> Self {
        let mut a = [0.0; SU4_PARAMS];
        a.copy_from_slice(p);
        Su4Params(a)
    }
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn mat4_zero() -> Mat4 {
    [[ZERO; 4]; 4]
}

#[cfg(test)]
pub fn mat4_identity() -> Mat4 {
    let mut m = mat4_zero();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(1.0, 0.0);
    }
    m
}

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = mat4_zero();
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            if aik == ZERO {
                continue;
            }
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat4_dagger(a: &Mat4) -> Mat4 {
    let mut out = mat4_zero();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Kronecker product of two single-qubit matrices, first factor on the
/// higher-order qubit of the pair.
pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = mat4_zero();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn rz(phi: f64) -> Mat2 {
    let h = phi / 2.0;
    [
        [c(h.cos(), -h.sin()), ZERO],
        [ZERO, c(h.cos(), h.sin())],
    ]
}

fn drz(phi: f64) -> Mat2 {
    // d/dφ Rz(φ) = (-i/2) Z Rz(φ)
    let h = phi / 2.0;
    [
        [c(-h.sin(), -h.cos()) * 0.5, ZERO],
        [ZERO, c(-h.sin(), h.cos()) * 0.5],
    ]
}

fn ry(theta: f64) -> Mat2 {
    let h = theta / 2.0;
    [
        [c(h.cos(), 0.0), c(-h.sin(), 0.0)],
        [c(h.sin(), 0.0), c(h.cos(), 0.0)],
    ]
}

fn dry(theta: f64) -> Mat2 {
    let h = theta / 2.0;
    [
        [c(-h.sin(), 0.0) * 0.5, c(-h.cos(), 0.0) * 0.5],
        [c(h.cos(), 0.0) * 0.5, c(-h.sin(), 0.0) * 0.5],
    ]
}

/// Euler triple `Rz(φ) Ry(ϑ) Rz(ω)` and its three partial derivatives.
fn euler_triple(phi: f64, theta: f64, omega: f64) -> (Mat2, [Mat2; 3]) {
    let (rzp, ryt, rzo) = (rz(phi), ry(theta), rz(omega));
    let t = mat2_mul(&mat2_mul(&rzp, &ryt), &rzo);
    let dphi = mat2_mul(&mat2_mul(&drz(phi), &ryt), &rzo);
    let dtheta = mat2_mul(&mat2_mul(&rzp, &dry(theta)), &rzo);
    let domega = mat2_mul(&mat2_mul(&rzp, &ryt), &drz(omega));
    (t, [dphi, dtheta, domega])
}

/// `exp(-i θ P)` for an involutory Pauli product `P` (`P² = I`):
/// `cos θ · I - i sin θ · P`, plus its θ-derivative.
fn pauli_rotation(theta: f64, p: &Mat4) -> (Mat4, Mat4) {
    let (s, co) = theta.sin_cos();
    let mut m = mat4_zero();
    let mut dm = mat4_zero();
    for i in 0..4 {
        for j in 0..4 {
            let pij = p[i][j];
            m[i][j] = -c(0.0, s) * pij;
            dm[i][j] = -c(0.0, co) * pij;
            if i == j {
                m[i][j] += c(co, 0.0);
                dm[i][j] += c(-s, 0.0);
            }
        }
    }
    (m, dm)
}

fn pauli_xx() -> Mat4 {
    let mut p = mat4_zero();
    p[0][3] = c(1.0, 0.0);
    p[1][2] = c(1.0, 0.0);
    p[2][1] = c(1.0, 0.0);
    p[3][0] = c(1.0, 0.0);
    p
}

fn pauli_yy() -> Mat4 {
    let mut p = mat4_zero();
    p[0][3] = c(-1.0, 0.0);
    p[1][2] = c(1.0, 0.0);
    p[2][1] = c(1.0, 0.0);
    p[3][0] = c(-1.0, 0.0);
    p
}

fn pauli_zz() -> Mat4 {
    let mut p = mat4_zero();
    p[0][0] = c(1.0, 0.0);
    p[1][1] = c(-1.0, 0.0);
    p[2][2] = c(-1.0, 0.0);
    p[3][3] = c(1.0, 0.0);
    p
}

/// Build the 4×4 unitary for one gate.
pub fn su4_gate(p: &Su4Params) -> Mat4 {
    su4_gate_with_grads(p, false).0
}

/// Build the gate and, when `with_grads`, the 15 partial derivatives
/// `∂U/∂p_j` in parameter order.
pub fn su4_gate_with_grads(p: &Su4Params, with_grads: bool) -> (Mat4, Option<[Mat4; SU4_PARAMS]>) {
    let q = &p.0;
    let (b1, db1) = euler_triple(q[0], q[1], q[2]);
    let (b2, db2) = euler_triple(q[3], q[4], q[5]);
    let (nx, dnx) = pauli_rotation(q[6], &pauli_xx());
    let (ny, dny) = pauli_rotation(q[7], &pauli_yy());
    let (nz, dnz) = pauli_rotation(q[8], &pauli_zz());
    let (a1, da1) = euler_triple(q[9], q[10], q[11]);
    let (a2, da2) = euler_triple(q[12], q[13], q[14]);

    let kb = kron2(&b1, &b2);
    let ka = kron2(&a1, &a2);
    let n = mat4_mul(&mat4_mul(&nx, &ny), &nz);
    let nkb = mat4_mul(&n, &kb);
    let kan = mat4_mul(&ka, &n);
    let u = mat4_mul(&ka, &nkb);

    if !with_grads {
        return (u, None);
    }

    let mut grads = [mat4_zero(); SU4_PARAMS];
    for j in 0..3 {
        grads[j] = mat4_mul(&kan, &kron2(&db1[j], &b2));
        grads[3 + j] = mat4_mul(&kan, &kron2(&b1, &db2[j]));
        grads[9 + j] = mat4_mul(&kron2(&da1[j], &a2), &nkb);
        grads[12 + j] = mat4_mul(&kron2(&a1, &da2[j]), &nkb);
    }
    let dn_x = mat4_mul(&mat4_mul(&dnx, &ny), &nz);
    let dn_y = mat4_mul(&mat4_mul(&nx, &dny), &nz);
    let dn_z = mat4_mul(&mat4_mul(&nx, &ny), &dnz);
    grads[6] = mat4_mul(&ka, &mat4_mul(&dn_x, &kb));
    grads[7] = mat4_mul(&ka, &mat4_mul(&dn_y, &kb));
    grads[8] = mat4_mul(&ka, &mat4_mul(&dn_z, &kb));
    (u, Some(grads))
}

/// Max-abs entry of `U†U - I`; zero for an exact unitary.
pub fn unitarity_defect(u: &Mat4) -> f64 {
    let prod = mat4_mul(&mat4_dagger(u), u);
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let expect = if i == j { c(1.0, 0.0) } else { ZERO };
            worst = worst.max((prod[i][j] - expect).norm());
        }
    }
    worst
}
