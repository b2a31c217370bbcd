//! Gaussian-process regression (Kriging) with one length scale per input
//! dimension.
//!
//! Inputs are standardized per dimension and targets to zero mean and unit
//! variance before fitting; hyperparameters and the stored factor live in
//! those standardized units and predictions are mapped back on the way out.
//! Hyperparameters minimize ½ ln|K| + ½ yᵀK⁻¹y using a derivative-free
//! pattern search in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// σ², the prior variance.
    pub amplitude: f64,
    pub length_scales: Vec<f64>,
    pub nugget: f64,
}

impl KernelParams {
    pub fn new(amplitude: f64, length_scales: Vec<f64>, nugget: f64) -> Result<Self> {
        let p = Self {
            amplitude,
            length_scales,
            nugget,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(dim: usize, amplitude: f64, length_scale: f64, nugget: f64) -> Result<Self> {
        Self::new(amplitude, vec![length_scale; dim], nugget)
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid("amplitude", "must be finite and > 0"));
        }
        if self.length_scales.is_empty() {
            return Err(Error::invalid(
                "length_scales",
                "need at least one dimension",
            ));
        }
        if self
            .length_scales
            .iter()
            .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            return Err(Error::invalid("length_scales", "must be finite and > 0"));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(Error::invalid("nugget", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn inv_sq_lengths(&self) -> Vec<f64> {
        self.length_scales.iter().map(|l| 1.0 / (l * l)).collect()
    }
}

#[inline]
fn sq_exp(a: &[f64], b: &[f64], inv_l2: &[f64], amplitude: f64) -> f64 {
    let mut s = 0.0;
    for ((x, y), w) in a.iter().zip(b).zip(inv_l2) {
        let d = x - y;
        s += d * d * w;
    }
    amplitude * (-0.5 * s).exp()
}

/// σ² exp(−½ Σ_d (x_d − x'_d)² / l_d²).
pub fn kernel(x: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64> {
    for v in [x, x2] {
        if v.len() != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                got: v.len(),
            });
        }
    }
    Ok(sq_exp(x, x2, &params.inv_sq_lengths(), params.amplitude))
}

fn covariance_factor(
    xs: &[f64],
    dim: usize,
    inv_l2: &[f64],
    amplitude: f64,
    nugget: f64,
) -> Result<Cholesky> {
    let n = xs.len() / dim;
    Cholesky::factor(n, |i, j| {
        if i == j {
            amplitude + nugget
        } else {
            sq_exp(
                &xs[i * dim..(i + 1) * dim],
                &xs[j * dim..(j + 1) * dim],
                inv_l2,
                amplitude,
            )
        }
    })
}

fn objective(chol: &Cholesky, y: &[f64]) -> f64 {
    let mut v = y.to_vec();
    chol.solve_lower_in_place(&mut v);
    0.5 * chol.log_det() + 0.5 * v.iter().map(|a| a * a).sum::<f64>()
}

/// Negative log marginal likelihood without its constant term:
/// ½ ln|K + nugget·I| + ½ yᵀ(K + nugget·I)⁻¹y.
pub fn nll(params: &KernelParams, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    params.validate()?;
    let flat = flatten(x, params.dim())?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let chol = covariance_factor(
        &flat,
        params.dim(),
        &params.inv_sq_lengths(),
        params.amplitude,
        params.nugget,
    )?;
    Ok(objective(&chol, y))
}

fn flatten(x: &[Vec<f64>], dim: usize) -> Result<Vec<f64>> {
    let mut flat = Vec::with_capacity(x.len() * dim);
    for row in x {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

/// Hyperparameter search settings. Bounds are in standardized units when
/// `standardize` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Starting nugget; doubled on factorization failure up to `max_nugget`.
    pub nugget: f64,
    pub max_nugget: f64,
    pub standardize: bool,
    /// Number of multi-start restarts for a fresh fit.
    pub restarts: usize,
    pub length_scale_bounds: (f64, f64),
    pub amplitude_bounds: (f64, f64),
    /// Final log-space step of a fresh fit.
    pub tolerance: f64,
    pub max_evaluations: usize,
    /// Initial and final log-space steps of a warm-started refit.
    pub warm_step: f64,
    pub warm_tolerance: f64,
    pub warm_max_evaluations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            nugget: 1e-8,
            max_nugget: 1e-4,
            standardize: true,
            restarts: 3,
            length_scale_bounds: (1e-2, 1e2),
            amplitude_bounds: (1e-4, 1e4),
            tolerance: 1e-4,
            max_evaluations: 4000,
            warm_step: 0.25,
            warm_tolerance: 1e-2,
            warm_max_evaluations: 200,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.nugget >= 0.0) {
            return Err(Error::invalid("nugget", "must be >= 0"));
        }
        if self.max_nugget < self.nugget {
            return Err(Error::invalid("max_nugget", "must be >= nugget"));
        }
        let (l0, l1) = self.length_scale_bounds;
        let (a0, a1) = self.amplitude_bounds;
        if !(l0 > 0.0 && l0 < l1) || !(a0 > 0.0 && a0 < a1) {
            return Err(Error::invalid("bounds", "need 0 < lower < upper"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be >= 1"));
        }
        if !(self.tolerance > 0.0 && self.warm_tolerance > 0.0 && self.warm_step > 0.0) {
            return Err(Error::invalid("tolerance", "steps must be > 0"));
        }
        Ok(())
    }
}

/// Affine maps between physical and standardized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    /// Zero when all training targets are identical.
    pub y_scale: f64,
}

impl Standardization {
    fn identity(dim: usize) -> Self {
        Self {
            x_mean: vec![0.0; dim],
            x_scale: vec![1.0; dim],
            y_mean: 0.0,
            y_scale: 1.0,
        }
    }

    fn from_data(x: &[f64], dim: usize, y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mut x_mean = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for (m, v) in x_mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut x_scale = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for ((s, v), m) in x_scale.iter_mut().zip(row).zip(&x_mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for (s, m) in x_scale.iter_mut().zip(&x_mean) {
            *s = s.sqrt();
            if !(*s > 1e-12 * m.abs().max(1e-300)) {
                *s = 1.0;
            }
        }
        let y_mean = y.iter().sum::<f64>() / n;
        let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_scale = y_var.sqrt();
        let y_scale = if y_scale > 1e-12 * y_mean.abs() && y_scale > 0.0 {
            y_scale
        } else {
            0.0
        };
        Self {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        }
    }

    fn input(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(
            x.iter()
                .zip(&self.x_mean)
                .zip(&self.x_scale)
                .map(|((v, m), s)| (v - m) / s),
        );
    }

    fn target(&self, y: f64) -> f64 {
        if self.y_scale > 0.0 {
            (y - self.y_mean) / self.y_scale
        } else {
            0.0
        }
    }
}

/// Posterior mean and standard deviation at one input, in output units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpPrediction {
    pub mean: f64,
    pub std: f64,
}

/// A conditioned Gaussian-process surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    dim: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    scaling: Standardization,
    /// Standardized training inputs, row-major n x dim.
    xs: Vec<f64>,
    ys: Vec<f64>,
    params: KernelParams,
    inv_l2: Vec<f64>,
    /// `None` for a constant-target model.
    chol: Option<Cholesky>,
    alpha: Vec<f64>,
    options: FitOptions,
}

impl GpModel {
    /// Fits hyperparameters by multi-start pattern search and conditions on the data.
    pub fn fit(x: &[Vec<f64>], y: &[f64], options: FitOptions) -> Result<Self> {
        options.validate()?;
        let mut model = Self::empty(x, y, options)?;
        if model.is_constant() {
            return Ok(model);
        }
        model.optimize(None)?;
        Ok(model)
    }

    /// Conditions on the data with fixed hyperparameters (no search).
    /// `params` are interpreted in standardized units when `options.standardize`.
    pub fn condition(
        x: &[Vec<f64>],
        y: &[f64],
        params: KernelParams,
        options: FitOptions,
    ) -> Result<Self> {
        params.validate()?;
        let mut model = Self::empty(x, y, options)?;
        if params.dim() != model.dim {
            return Err(Error::DimensionMismatch {
                expected: model.dim,
                got: params.dim(),
            });
        }
        model.set_params(params);
        if !model.is_constant() {
            model.refactor()?;
        }
        Ok(model)
    }

    fn empty(x: &[Vec<f64>], y: &[f64], options: FitOptions) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("training set", "need at least one point"));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        let dim = x[0].len();
        if dim == 0 {
            return Err(Error::invalid(
                "training set",
                "inputs must have dimension >= 1",
            ));
        }
        let flat = flatten(x, dim)?;
        if flat.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("training set", "non-finite value"));
        }
        let scaling = if options.standardize {
            Standardization::from_data(&flat, dim, y)
        } else {
            Standardization::identity(dim)
        };
        let mut model = Self {
            dim,
            inputs: x.to_vec(),
            targets: y.to_vec(),
            scaling,
            xs: Vec::new(),
            ys: Vec::new(),
            params: KernelParams::isotropic(dim, 1.0, 1.0, options.nugget)?,
            inv_l2: vec![1.0; dim],
            chol: None,
            alpha: Vec::new(),
            options,
        };
        model.restandardize();
        Ok(model)
    }

    fn restandardize(&mut self) {
        self.xs.clear();
        for row in &self.inputs {
            self.scaling.input(row, &mut self.xs);
        }
        self.ys = self
            .targets
            .iter()
            .map(|&v| self.scaling.target(v))
            .collect();
    }

    fn set_params(&mut self, params: KernelParams) {
        self.inv_l2 = params.inv_sq_lengths();
        self.params = params;
    }

    fn refactor(&mut self) -> Result<()> {
        let chol = covariance_factor(
            &self.xs,
            self.dim,
            &self.inv_l2,
            self.params.amplitude,
            self.params.nugget,
        )?;
        self.alpha = chol.solve(&self.ys);
        self.chol = Some(chol);
        Ok(())
    }

    /// True when every training target is identical; such a model predicts
    /// that value with zero spread everywhere.
    pub fn is_constant(&self) -> bool {
        self.options.standardize && self.scaling.y_scale == 0.0
    }

    /// Runs the hyperparameter search, either multi-start from the defaults or
    /// warm-started from `warm`, doubling the nugget on factorization failure.
    fn optimize(&mut self, warm: Option<&KernelParams>) -> Result<()> {
        let opts = self.options.clone();
        let (l_lo, l_hi) = opts.length_scale_bounds;
        let (a_lo, a_hi) = opts.amplitude_bounds;
        let lower: Vec<f64> = std::iter::once(a_lo.ln())
            .chain(std::iter::repeat(l_lo.ln()).take(self.dim))
            .collect();
        let upper: Vec<f64> = std::iter::once(a_hi.ln())
            .chain(std::iter::repeat(l_hi.ln()).take(self.dim))
            .collect();

        let starts: Vec<Vec<f64>> = match warm {
            Some(p) => vec![std::iter::once(p.amplitude.ln())
                .chain(p.length_scales.iter().map(|l| l.ln()))
                .collect()],
            None => {
                let amp = if opts.standardize {
                    1.0
                } else {
                    let m = self.ys.iter().sum::<f64>() / self.ys.len() as f64;
                    let v =
                        self.ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / self.ys.len() as f64;
                    v.max(a_lo)
                };
                [1.0, 0.25, 4.0]
                    .iter()
                    .cycle()
                    .take(opts.restarts)
                    .map(|&l: &f64| {
                        std::iter::once(amp.ln())
                            .chain(std::iter::repeat(l.ln()).take(self.dim))
                            .collect()
                    })
                    .collect()
            }
        };
        let (step, tol, max_evals) = match warm {
            Some(_) => (
                opts.warm_step,
                opts.warm_tolerance,
                opts.warm_max_evaluations,
            ),
            None => (1.0, opts.tolerance, opts.max_evaluations),
        };

        let mut nugget = warm.map_or(opts.nugget, |p| p.nugget.max(opts.nugget));
        loop {
            let xs = &self.xs;
            let ys = &self.ys;
            let dim = self.dim;
            let mut f = |theta: &[f64]| -> f64 {
                let amp = theta[0].exp();
                let inv_l2: Vec<f64> = theta[1..].iter().map(|t| (-2.0 * t).exp()).collect();
                match covariance_factor(xs, dim, &inv_l2, amp, nugget) {
                    Ok(chol) => objective(&chol, ys),
                    Err(_) => f64::INFINITY,
                }
            };
            let mut best: Option<(Vec<f64>, f64)> = None;
            for start in &starts {
                let (theta, value) =
                    pattern_search(&mut f, start, &lower, &upper, step, tol, max_evals);
                if value.is_finite() && best.as_ref().map_or(true, |(_, b)| value < *b) {
                    best = Some((theta, value));
                }
            }
            if let Some((theta, _)) = best {
                let params = KernelParams {
                    amplitude: theta[0].exp(),
                    length_scales: theta[1..].iter().map(|t| t.exp()).collect(),
                    nugget,
                };
                self.set_params(params);
                match self.refactor() {
                    Ok(()) => return Ok(()),
                    Err(e) if nugget >= opts.max_nugget || nugget == 0.0 => {
                        return Err(Error::Fitting(e.to_string()))
                    }
                    Err(_) => {}
                }
            } else if nugget >= opts.max_nugget || nugget == 0.0 {
                return Err(Error::Fitting(format!(
                    "no restart produced a positive-definite covariance (nugget {nugget:e})"
                )));
            }
            nugget = (nugget * 2.0).min(opts.max_nugget);
        }
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> GpPrediction {
        let mut k = Vec::with_capacity(self.len());
        self.predict_with(x, &mut k)
    }

    /// Like [`predict`](Self::predict) but reuses a caller-owned buffer.
    pub fn predict_with(&self, x: &[f64], k: &mut Vec<f64>) -> GpPrediction {
        debug_assert_eq!(x.len(), self.dim);
        let Some(chol) = &self.chol else {
            return GpPrediction {
                mean: self.scaling.y_mean,
                std: 0.0,
            };
        };
        let mut z = Vec::with_capacity(self.dim);
        self.scaling.input(x, &mut z);
        k.clear();
        k.extend(
            self.xs
                .chunks_exact(self.dim)
                .map(|row| sq_exp(&z, row, &self.inv_l2, self.params.amplitude)),
        );
        let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        chol.solve_lower_in_place(k);
        let var = (self.params.amplitude - k.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        GpPrediction {
            mean: self.scaling.y_mean + self.scaling.y_scale * mean,
            std: self.scaling.y_scale * var.sqrt(),
        }
    }

    /// Adds one training pair. With `refit_hyperparams` the hyperparameters are
    /// re-optimized warm-started from the current values and the
    /// standardization is recomputed; otherwise the factor is extended by one
    /// row under the existing scaling.
    pub fn add_point(&mut self, x: &[f64], y: f64, refit_hyperparams: bool) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training point", "non-finite value"));
        }
        self.inputs.push(x.to_vec());
        self.targets.push(y);
        let was_constant = self.is_constant();
        if refit_hyperparams || was_constant {
            return self.refit();
        }
        let start = self.xs.len();
        self.scaling.input(x, &mut self.xs);
        self.ys.push(self.scaling.target(y));
        let chol = self.chol.as_mut().expect("non-constant model has a factor");
        let z = &self.xs[start..];
        let mut row: Vec<f64> = self.xs[..start]
            .chunks_exact(self.dim)
            .map(|r| sq_exp(z, r, &self.inv_l2, self.params.amplitude))
            .collect();
        row.push(self.params.amplitude + self.params.nugget);
        match chol.push_row(&row) {
            Ok(()) => {
                self.alpha = chol.solve(&self.ys);
                Ok(())
            }
            Err(_) => self.refit(),
        }
    }

    /// Recomputes the standardization and re-optimizes hyperparameters,
    /// warm-started from the current ones.
    pub fn refit(&mut self) -> Result<()> {
        if self.options.standardize {
            let flat = flatten(&self.inputs, self.dim)?;
            self.scaling = Standardization::from_data(&flat, self.dim, &self.targets);
        }
        self.restandardize();
        if self.is_constant() {
            self.chol = None;
            self.alpha.clear();
            return Ok(());
        }
        if self.chol.is_none() {
            // previously constant: no meaningful warm start
            return self.optimize(None);
        }
        let warm = self.params.clone();
        self.optimize(Some(&warm))
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Hyperparameters in standardized units.
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn scaling(&self) -> &Standardization {
        &self.scaling
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn factor(&self) -> Option<&Cholesky> {
        self.chol.as_ref()
    }

    /// Objective value at the current hyperparameters, in standardized units.
    pub fn objective(&self) -> Option<f64> {
        self.chol.as_ref().map(|c| objective(c, &self.ys))
    }

    /// Standardized training data (inputs row-major, targets).
    pub fn standardized_data(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            self.xs.chunks_exact(self.dim).map(|r| r.to_vec()).collect(),
            self.ys.clone(),
        )
    }

    pub fn dump(&self) -> GpDump {
        GpDump {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            params: self.params.clone(),
            options: self.options.clone(),
        }
    }
}

/// JSON-serializable snapshot of a model: training set plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDump {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub params: KernelParams,
    pub options: FitOptions,
}

impl GpDump {
    /// Rebuilds the model with the stored hyperparameters (no search).
    pub fn restore(&self) -> Result<GpModel> {
        GpModel::condition(
            &self.inputs,
            &self.targets,
            self.params.clone(),
            self.options.clone(),
        )
    }
}

/// Hooke-Jeeves pattern search on a box. Returns the best point and value.
fn pattern_search(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    initial_step: f64,
    tolerance: f64,
    max_evaluations: usize,
) -> (Vec<f64>, f64) {
    let clamp = |x: &mut [f64]| {
        for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut base = start.to_vec();
    clamp(&mut base);
    let mut f_base = eval(&base, &mut evals);
    if !f_base.is_finite() {
        return (base, f64::INFINITY);
    }

    let explore = |x: &mut Vec<f64>,
                   fx: &mut f64,
                   step: f64,
                   evals: &mut usize,
                   eval: &mut dyn FnMut(&[f64], &mut usize) -> f64| {
        for i in 0..x.len() {
            let orig = x[i];
            for dir in [1.0, -1.0] {
                let cand = (orig + dir * step).clamp(lower[i], upper[i]);
                if cand == orig {
                    continue;
                }
                x[i] = cand;
                let fc = eval(x, evals);
                if fc < *fx {
                    *fx = fc;
                    break;
                }
                x[i] = orig;
            }
        }
    };

    let mut step = initial_step;
    while step >= tolerance && evals < max_evaluations {
        let mut x = base.clone();
        let mut fx = f_base;
        explore(&mut x, &mut fx, step, &mut evals, &mut eval);
        if fx < f_base {
            // Keep moving along the improving direction while it pays off.
            loop {
                let mut pattern: Vec<f64> = x.iter().zip(&base).map(|(a, b)| 2.0 * a - b).collect();
                clamp(&mut pattern);
                base = x;
                f_base = fx;
                if evals >= max_evaluations {
                    break;
                }
                let mut fp = eval(&pattern, &mut evals);
                explore(&mut pattern, &mut fp, step, &mut evals, &mut eval);
                if fp < f_base {
                    x = pattern;
                    fx = fp;
                } else {
                    break;
                }
            }
        } else {
            step *= 0.5;
        }
    }
    (base, f_base)
}
