//! Small fixed-size vector/matrix helpers used throughout the crate.
//!
//! Plain `[f64; 3]` / row-major `[[f64; 3]; 3]` keep the hot paths
//! allocation-free and serde-trivial.

pub type Vec3 = [f64; 3];
/// Row-major 3x3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n == 0.0 {
        [0.0, 0.0, 0.0]
    } else {
        scale(a, 1.0 / n)
    }
}

/// y = M x
#[inline]
pub fn mat_vec(m: &Mat3, x: Vec3) -> Vec3 {
    [dot(m[0], x), dot(m[1], x), dot(m[2], x)]
}

/// y = M^T x
#[inline]
pub fn mat_t_vec(m: &Mat3, x: Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2],
        m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2],
        m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn det(m: &Mat3) -> f64 {
    dot(m[0], cross(m[1], m[2]))
}

/// Skew-symmetric cross-product matrix: skew(w) x = w cross x.
pub fn skew(w: Vec3) -> Mat3 {
    [
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ]
}

/// Rodrigues rotation: exp of the skew matrix of an axis-angle vector.
pub fn rotation_exp(w: Vec3) -> Mat3 {
    let theta = norm(w);
    if theta < 1e-12 {
        // Second-order series keeps the map smooth through zero.
        let k = skew(w);
        let k2 = mat_mul(&k, &k);
        let mut r = IDENTITY;
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] += k[i][j] + 0.5 * k2[i][j];
            }
        }
        return r;
    }
    let k = skew(scale(w, 1.0 / theta));
    let k2 = mat_mul(&k, &k);
    let (s, c) = theta.sin_cos();
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += s * k[i][j] + (1.0 - c) * k2[i][j];
        }
    }
    r
}

/// Partial derivatives of `rotation_exp` w.r.t. each axis-angle component.
///
/// Uses dR/dw_i = ((w_i [w]x + [w x (I - R) e_i]x) / |w|^2) R, with the
/// |w| -> 0 limit dR/dw_i = [e_i]x.
pub fn rotation_exp_jacobian(w: Vec3) -> (Mat3, [Mat3; 3]) {
    let r = rotation_exp(w);
    let theta2 = dot(w, w);
    let mut jac = [[[0.0; 3]; 3]; 3];
    if theta2 < 1e-16 {
        for (i, j) in jac.iter_mut().enumerate() {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            *j = skew(e);
        }
        return (r, jac);
    }
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        // (I - R) e_i
        let re = mat_vec(&r, e);
        let ime = sub(e, re);
        let v = cross(w, ime);
        let a = skew(scale(w, w[i] / theta2));
        let b = skew(scale(v, 1.0 / theta2));
        let mut m = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                m[p][q] = a[p][q] + b[p][q];
            }
        }
        jac[i] = mat_mul(&m, &r);
    }
    (r, jac)
}

/// Rotation taking unit vector `a` to unit vector `b` by the minimal angle.
pub fn rotation_between(a: Vec3, b: Vec3) -> Mat3 {
    let c = cross(a, b);
    let d = dot(a, b);
    if d < -1.0 + 1e-12 {
        // Antiparallel: rotate pi about any axis orthogonal to a.
        let ax = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let axis = normalize(cross(a, ax));
        return rotation_exp(scale(axis, std::f64::consts::PI));
    }
    let k = skew(c);
    let k2 = mat_mul(&k, &k);
    let f = 1.0 / (1.0 + d);
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += k[i][j] + f * k2[i][j];
        }
    }
    r
}

/// Rigid transform x -> R x + t.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rigid {
    pub rot: Mat3,
    pub t: Vec3,
}

impl Rigid {
    pub const IDENTITY: Rigid = Rigid { rot: IDENTITY, t: [0.0; 3] };

    pub fn new(rot: Mat3, t: Vec3) -> Self {
        Rigid { rot, t }
    }

    #[inline]
    pub fn apply(&self, x: Vec3) -> Vec3 {
        add(mat_vec(&self.rot, x), self.t)
    }

    /// self o other (apply `other` first).
    pub fn compose(&self, other: &Rigid) -> Rigid {
        Rigid {
            rot: mat_mul(&self.rot, &other.rot),
            t: add(mat_vec(&self.rot, other.t), self.t),
        }
    }

    pub fn inverse(&self) -> Rigid {
        let rt = transpose(&self.rot);
        Rigid { rot: rt, t: scale(mat_t_vec(&self.rot, self.t), -1.0) }
    }

    /// Rotation about a fixed pivot point.
    pub fn about_pivot(rot: Mat3, pivot: Vec3) -> Rigid {
        Rigid { rot, t: sub(pivot, mat_vec(&rot, pivot)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_mat_close(a: &Mat3, b: &Mat3, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() < tol, "({i},{j}): {} vs {}", a[i][j], b[i][j]);
            }
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_mat_close(&rotation_exp([0.0; 3]), &IDENTITY, 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let r = rotation_exp([0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let v = mat_vec(&r, [1.0, 0.0, 0.0]);
        assert!(norm(sub(v, [0.0, 1.0, 0.0])) < 1e-12);
        assert!((det(&r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_jacobian_matches_finite_differences() {
        let w = [0.3, -0.2, 0.5];
        let (_, jac) = rotation_exp_jacobian(w);
        let h = 1e-6;
        for i in 0..3 {
            let mut wp = w;
            let mut wm = w;
            wp[i] += h;
            wm[i] -= h;
            let rp = rotation_exp(wp);
            let rm = rotation_exp(wm);
            for p in 0..3 {
                for q in 0..3 {
                    let fd = (rp[p][q] - rm[p][q]) / (2.0 * h);
                    assert!(
                        (fd - jac[i][p][q]).abs() < 1e-8,
                        "d/dw{i} R[{p}][{q}]: fd {fd} analytic {}",
                        jac[i][p][q]
                    );
                }
            }
        }
    }

    #[test]
    fn exp_jacobian_near_zero() {
        let w = [1e-9, -2e-9, 1e-9];
        let (_, jac) = rotation_exp_jacobian(w);
        for (i, j) in jac.iter().enumerate() {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            assert_mat_close(j, &skew(e), 1e-8);
        }
    }

    #[test]
    fn rotation_between_maps_a_to_b() {
        let a = normalize([1.0, 2.0, -0.5]);
        let b = normalize([-0.3, 0.4, 1.0]);
        let r = rotation_between(a, b);
        assert!(norm(sub(mat_vec(&r, a), b)) < 1e-12);
        assert!((det(&r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rigid_compose_and_inverse_round_trip() {
        let a = Rigid::new(rotation_exp([0.1, 0.2, 0.3]), [1.0, -2.0, 0.5]);
        let x = [0.3, 0.7, -1.1];
        let y = a.inverse().apply(a.apply(x));
        assert!(norm(sub(x, y)) < 1e-12);
        let b = Rigid::about_pivot(rotation_exp([0.0, 0.5, 0.0]), [1.0, 1.0, 1.0]);
        assert!(norm(sub(b.apply([1.0, 1.0, 1.0]), [1.0, 1.0, 1.0])) < 1e-12);
    }
}
