//! Brute-force dense reference for every conditional-posterior parameter,
//! written against plain `Vec` matrices with its own Gauss-Jordan inverse.
//! Deliberately shares no linear-algebra code with the implementation it
//! checks.

#![allow(clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (r, inner, c) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(r, c);
    for i in 0..r {
        for k in 0..inner {
            let aik = a[i][k];
            for j in 0..c {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a[0].len());
    let mut out = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    let mut out = a.clone();
    for i in 0..a.len() {
        for j in 0..a[0].len() {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    let mut out = a.clone();
    for i in 0..a.len() {
        for j in 0..a[0].len() {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    a.iter()
        .map(|row| row.iter().map(|v| v * s).collect())
        .collect()
}

pub fn outer(x: &[f64], y: &[f64]) -> Mat {
    x.iter()
        .map(|&xi| y.iter().map(|&yj| xi * yj).collect())
        .collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                aug[i][col]
                    .abs()
                    .partial_cmp(&aug[j][col].abs())
                    .expect("finite pivots")
            })
            .expect("non-empty");
        aug.swap(col, pivot_row);
        let pivot = aug[col][col];
        assert!(pivot.abs() > 1e-300, "singular matrix in oracle inverse");
        for j in 0..2 * n {
            aug[col][j] /= pivot;
        }
        for i in 0..n {
            if i != col {
                let f = aug[i][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        aug[i][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// One random small instance shared by oracle and implementation.
pub struct Instance {
    pub k: usize,
    pub m: usize,
    pub t: usize,
    pub lags: Vec<usize>,
    pub y: Mat,
    pub mask: Vec<Vec<u8>>,
    pub u: Mat,
    pub x: Mat,
    pub hyper_mean: Vec<f64>,
    pub hyper_prec: Mat,
    /// Stacked AR coefficients ((K d) x K); the effective transition matrix
    /// for lag j is the transpose of its j-th block.
    pub a_stacked: Mat,
    pub sigma: Mat,
    pub sigma_tilde: Mat,
    pub tau: f64,
    pub mu0: Vec<f64>,
    pub beta0: f64,
    pub w0: Mat,
    pub v0: f64,
    pub lambda0: Mat,
    pub row_cov0: Mat,
    pub psi0: Mat,
    pub a0: f64,
    pub b0: f64,
}

impl Instance {
    pub fn max_lag(&self) -> usize {
        *self.lags.last().unwrap()
    }

    /// Effective K x K transition matrix of lag j (transpose of the stored
    /// block).
    fn effective(&self, j: usize) -> Mat {
        let k = self.k;
        let mut out = zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                out[r][c] = self.a_stacked[j * k + r][c];
            }
        }
        transpose(&out)
    }

    fn x_col(&self, t: usize) -> Vec<f64> {
        (0..self.k).map(|i| self.x[i][t]).collect()
    }

    fn u_col(&self, i: usize) -> Vec<f64> {
        (0..self.k).map(|r| self.u[r][i]).collect()
    }

    /// Lag stack z_t of length K d.
    pub fn z(&self, t: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.k * self.lags.len());
        for &lag in &self.lags {
            z.extend(self.x_col(t - lag));
        }
        z
    }

    /// AR mean of column t: sum of effective_j x_{t-l_j}.
    pub fn ar_mean(&self, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (j, &lag) in self.lags.iter().enumerate() {
            out = vec_add(&out, &matvec(&self.effective(j), &self.x_col(t - lag)));
        }
        out
    }

    /// Spatial hyper-posterior parameters: (mean, beta, dof, inverse scale).
    pub fn spatial_hyper(&self) -> (Vec<f64>, f64, f64, Mat) {
        let m = self.m as f64;
        let mut u_bar = vec![0.0; self.k];
        for i in 0..self.m {
            u_bar = vec_add(&u_bar, &self.u_col(i));
        }
        u_bar = vec_scale(&u_bar, 1.0 / m);
        let mut scatter = zeros(self.k, self.k);
        for i in 0..self.m {
            let d = vec_sub(&self.u_col(i), &u_bar);
            scatter = add(&scatter, &outer(&d, &d));
        }
        scatter = scale(&scatter, 1.0 / m);
        let beta = self.beta0 + m;
        let dof = self.v0 + m;
        let mean = vec_scale(
            &vec_add(&vec_scale(&self.mu0, self.beta0), &vec_scale(&u_bar, m)),
            1.0 / beta,
        );
        let diff = vec_sub(&self.mu0, &u_bar);
        let inv_scale = add(
            &add(&inverse(&self.w0), &scale(&scatter, m)),
            &scale(&outer(&diff, &diff), self.beta0 * m / beta),
        );
        (mean, beta, dof, inv_scale)
    }

    /// Spatial factor conditional (precision, shift) for one channel.
    pub fn spatial_factor(&self, channel: usize) -> (Mat, Vec<f64>) {
        let mut prec = self.hyper_prec.clone();
        let mut rhs = matvec(&self.hyper_prec, &self.hyper_mean);
        for t in 0..self.t {
            if self.mask[channel][t] == 1 {
                let x = self.x_col(t);
                prec = add(&prec, &scale(&outer(&x, &x), self.tau));
                rhs = vec_add(&rhs, &vec_scale(&x, self.tau * self.y[channel][t]));
            }
        }
        (prec, rhs)
    }

    /// AR hyper-posterior parameters: (row covariance, mean, dof, scale).
    pub fn temporal_hyper(&self) -> (Mat, Mat, f64, Mat) {
        let l_max = self.max_lag();
        let rows = self.t - l_max;
        let kd = self.k * self.lags.len();
        let mut p = zeros(rows, self.k);
        let mut q = zeros(rows, kd);
        for (row, t) in (l_max..self.t).enumerate() {
            p[row] = self.x_col(t);
            q[row] = self.z(t);
        }
        let v0_inv = inverse(&self.row_cov0);
        let row_prec = add(&v0_inv, &matmul(&transpose(&q), &q));
        let row_cov = inverse(&row_prec);
        let shift = add(&matmul(&v0_inv, &self.lambda0), &matmul(&transpose(&q), &p));
        let mean = matmul(&row_cov, &shift);
        let dof = self.v0 + rows as f64;
        // literal form: psi0 + P'P + L0' V0^-1 L0 - (L0*)' (V0*)^-1 (L0*)
        let scale_mat = sub(
            &add(
                &add(&self.psi0, &matmul(&transpose(&p), &p)),
                &matmul(&transpose(&self.lambda0), &matmul(&v0_inv, &self.lambda0)),
            ),
            &matmul(&transpose(&mean), &matmul(&row_prec, &mean)),
        );
        (row_cov, mean, dof, scale_mat)
    }

    /// Temporal factor conditional (precision, shift) at one column,
    /// assembling the observation term and the C/D/E/F pieces literally.
    pub fn temporal_factor(&self, t: usize) -> (Mat, Vec<f64>) {
        let k = self.k;
        let l_max = self.max_lag();
        let sigma_inv = inverse(&self.sigma);
        let mut prec = zeros(k, k);
        let mut rhs = vec![0.0; k];
        for i in 0..self.m {
            if self.mask[i][t] == 1 {
                let u = self.u_col(i);
                prec = add(&prec, &scale(&outer(&u, &u), self.tau));
                rhs = vec_add(&rhs, &vec_scale(&u, self.tau * self.y[i][t]));
            }
        }
        // C and E: forward couplings
        for (j, &lj) in self.lags.iter().enumerate() {
            let s = t + lj;
            if s >= l_max && s < self.t {
                let aj = self.effective(j);
                let c_j = matmul(&transpose(&aj), &matmul(&sigma_inv, &aj));
                prec = add(&prec, &c_j);
                let mut phi = self.x_col(s);
                for (p_idx, &lp) in self.lags.iter().enumerate() {
                    if p_idx != j {
                        phi = vec_sub(&phi, &matvec(&self.effective(p_idx), &self.x_col(s - lp)));
                    }
                }
                let e_j = matvec(&matmul(&transpose(&aj), &sigma_inv), &phi);
                rhs = vec_add(&rhs, &e_j);
            }
        }
        // D and F: backward branch
        if t < l_max {
            prec = add(&prec, &eye(k));
        } else {
            prec = add(&prec, &sigma_inv);
            rhs = vec_add(&rhs, &matvec(&sigma_inv, &self.ar_mean(t)));
        }
        (prec, rhs)
    }

    /// Noise precision posterior (shape, rate).
    pub fn precision(&self) -> (f64, f64) {
        let mut n = 0usize;
        let mut sq = 0.0;
        for i in 0..self.m {
            for t in 0..self.t {
                if self.mask[i][t] == 1 {
                    let fitted: f64 = (0..self.k).map(|r| self.u[r][i] * self.x[r][t]).sum();
                    let r = self.y[i][t] - fitted;
                    sq += r * r;
                    n += 1;
                }
            }
        }
        (self.a0 + n as f64 / 2.0, self.b0 + 0.5 * sq)
    }

    /// Innovation-covariance posterior scale at column t >= max lag.
    pub fn innovation_scale(&self, t: usize) -> Mat {
        let r = vec_sub(&self.x_col(t), &self.ar_mean(t));
        add(&self.psi0, &outer(&r, &r))
    }

    /// Forecast-time factor conditional (precision, shift) at column t,
    /// using the working innovation covariance.
    pub fn current_factor(&self, t: usize) -> (Mat, Vec<f64>) {
        let st_inv = inverse(&self.sigma_tilde);
        let mut prec = st_inv.clone();
        let mut rhs = matvec(&st_inv, &self.ar_mean(t));
        for i in 0..self.m {
            if self.mask[i][t] == 1 {
                let u = self.u_col(i);
                prec = add(&prec, &scale(&outer(&u, &u), self.tau));
                rhs = vec_add(&rhs, &vec_scale(&u, self.tau * self.y[i][t]));
            }
        }
        (prec, rhs)
    }
}
