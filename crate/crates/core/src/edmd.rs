//! Snapshot assembly and the regularized linear operator solve, plus the
//! Koopman model container and its file format.
//!
//! Convention: snapshot matrices store lifted vectors as columns, so the
//! operator acts on the left (`yf ~ K yp`, `K` is m x m). This is the
//! transpose of the row-stacked layout some DMD write-ups use; one
//! convention is used consistently everywhere in this crate.

use crate::dictionary::{multi_indices, MultiIndexSet, PolyDictSpec};
use crate::error::{Error, Result};
use crate::neural::{self, ForwardMode, MlpParams, MlpSpec};
use crate::numerics::{pinv, Mat, Rng};
use crate::systems::{Dataset, Split};
use serde::{Deserialize, Serialize};

/// Either dictionary kind behind one lifting interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DictionaryKind {
    Poly { spec: PolyDictSpec },
    Neural { spec: MlpSpec, params: MlpParams },
}

impl DictionaryKind {
    pub fn input_dim(&self) -> usize {
        match self {
            DictionaryKind::Poly { spec } => spec.input_dim,
            DictionaryKind::Neural { spec, .. } => spec.input_dim,
        }
    }

    pub fn lifted_dim(&self) -> Result<usize> {
        match self {
            DictionaryKind::Poly { spec } => spec.lifted_dim(),
            DictionaryKind::Neural { spec, .. } => Ok(spec.lifted_dim()),
        }
    }

    /// Deterministic (eval-mode) lift.
    pub fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            DictionaryKind::Poly { spec } => spec.lift(y),
            DictionaryKind::Neural { spec, params } => {
                neural::forward(spec, params, y, ForwardMode::Eval).map(|(lifted, _)| lifted)
            }
        }
    }

    /// Reusable lifter that precomputes the polynomial multi-index set.
    pub fn lifter(&self) -> Result<Lifter<'_>> {
        let set = match self {
            DictionaryKind::Poly { spec } => {
                spec.validate()?;
                Some(multi_indices(spec.input_dim, spec.max_total_degree, spec.cap)?)
            }
            DictionaryKind::Neural { spec, params } => {
                spec.validate()?;
                params.validate_shapes(spec)?;
                None
            }
        };
        Ok(Lifter { kind: self, set })
    }
}

/// Hot-path lifting handle for [`DictionaryKind`].
pub struct Lifter<'a> {
    kind: &'a DictionaryKind,
    set: Option<MultiIndexSet>,
}

impl Lifter<'_> {
    pub fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        match (self.kind, &self.set) {
            (DictionaryKind::Poly { spec }, Some(set)) => {
                spec.check_domain(y)?;
                Ok(spec.lift_with(set, y))
            }
            (DictionaryKind::Neural { spec, params }, _) => {
                neural::forward(spec, params, y, ForwardMode::Eval).map(|(l, _)| l)
            }
            _ => unreachable!("poly lifter always has an index set"),
        }
    }
}

/// Paired snapshot matrices of lifted predecessors and successors.
#[derive(Debug, Clone)]
pub struct Snapshots {
    /// m x M lifted predecessors.
    pub yp: Mat,
    /// m x M lifted successors; column t is the successor of yp column t.
    pub yf: Mat,
}

impl Snapshots {
    pub fn lifted_dim(&self) -> usize {
        self.yp.rows()
    }

    pub fn pair_count(&self) -> usize {
        self.yp.cols()
    }

    /// Order-stable FNV hash of the snapshot bytes, stored in model metadata
    /// for reproducibility audits.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for &v in self.yp.data().iter().chain(self.yf.data()) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Lift all transition pairs of one split of a dataset.
///
/// Columns are ordered by trajectory, then by time; no pair spans a
/// trajectory boundary.
pub fn build_snapshots(
    dataset: &Dataset,
    split: Split,
    dictionary: &DictionaryKind,
) -> Result<Snapshots> {
    let p = dataset.dim();
    if dictionary.input_dim() != p {
        return Err(Error::InvalidArgument(format!(
            "dictionary expects input dim {}, dataset has {p}",
            dictionary.input_dim()
        )));
    }
    let m = dictionary.lifted_dim()?;
    let lifter = dictionary.lifter()?;
    let pairs = dataset.pairs_in(split);
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "no transition pairs in the requested split".into(),
        ));
    }
    let big_m = pairs.len();
    let mut yp = Mat::zeros(m, big_m);
    let mut yf = Mat::zeros(m, big_m);
    for (t, (prev, next)) in pairs.iter().enumerate() {
        yp.set_col(t, &lifter.lift(prev)?);
        yf.set_col(t, &lifter.lift(next)?);
    }
    Ok(Snapshots { yp, yf })
}

/// Solver configuration for the operator fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdmdConfig {
    /// Group-sparsity weight; 0 selects the closed-form least-squares path.
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Fixed proximal step size; `None` selects 1/L from the data.
    pub step_size: Option<f64>,
}

impl Default for EdmdConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iter: 500,
            tol: 1e-9,
            step_size: None,
        }
    }
}

/// Result of [`solve`]: the operator plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub k: Mat,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Shrink a column toward zero: `col * max(0, 1 - t / ||col||)`, exactly
/// zero when the norm is at or below the threshold.
pub fn group_soft_threshold(column: &[f64], t: f64) -> Vec<f64> {
    assert!(t >= 0.0, "threshold must be >= 0");
    if t == 0.0 {
        return column.to_vec();
    }
    let norm = column.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t {
        return vec![0.0; column.len()];
    }
    let scale = 1.0 - t / norm;
    column.iter().map(|v| v * scale).collect()
}

/// Largest eigenvalue of a symmetric PSD matrix by deterministic power
/// iteration.
fn sym_spectral_norm(a: &Mat) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = a.matvec(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let new_lambda = norm;
        let done = (new_lambda - lambda).abs() <= 1e-12 * new_lambda.max(1.0);
        v = next;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    lambda
}

/// Fit `K` so that `yf ~ K yp`.
///
/// With `lambda = 0` this is the minimum-norm least squares solution through
/// the SVD pseudoinverse. With `lambda > 0` it minimizes
/// `(1/M) ||yf - K yp||_F^2 + lambda * sum_j ||K_(:,j)||_2`
/// by accelerated proximal gradient with column group soft-thresholding,
/// backtracking, and a monotone safeguard.
pub fn solve(snapshots: &Snapshots, config: &EdmdConfig) -> Result<SolveResult> {
    if config.tol.is_nan() || config.tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }
    if config.lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be >= 0".into()));
    }
    let m = snapshots.lifted_dim();
    let big_m = snapshots.pair_count();

    if config.lambda == 0.0 {
        // K = yf pinv(yp). For the common M > m case go through the Gram
        // matrix: yf yp^T (yp yp^T)^+ is the same minimum-norm solution and
        // keeps the SVD at m x m.
        let k = if big_m > m {
            let gpp = snapshots.yp.matmul(&snapshots.yp.transpose());
            let gfp = snapshots.yf.matmul(&snapshots.yp.transpose());
            gfp.matmul(&pinv(&gpp, 0.0)?)
        } else {
            snapshots.yf.matmul(&pinv(&snapshots.yp, 0.0)?)
        };
        if !k.is_finite() {
            return Err(Error::NumericalFailure("non-finite least-squares solution".into()));
        }
        let residual = k.matmul(&snapshots.yp).sub(&snapshots.yf).frob_norm();
        return Ok(SolveResult {
            objective: residual * residual / big_m as f64,
            k,
            converged: true,
            iterations: 0,
        });
    }

    // Precomputed Gram form: f(K) = (c - 2<K, Gfp> + <K Gpp, K>) / M.
    let gpp = snapshots.yp.matmul(&snapshots.yp.transpose());
    let gfp = snapshots.yf.matmul(&snapshots.yp.transpose());
    let c = {
        let f = snapshots.yf.frob_norm();
        f * f
    };
    let m_f = big_m as f64;
    let smooth = |k: &Mat| -> f64 {
        (c - 2.0 * k.dot(&gfp) + k.matmul(&gpp).dot(k)) / m_f
    };
    let grad = |k: &Mat| -> Mat { k.matmul(&gpp).sub(&gfp).scale(2.0 / m_f) };
    let penalty = |k: &Mat| -> f64 {
        (0..k.cols()).map(|j| k.col_norm(j)).sum::<f64>() * config.lambda
    };
    let prox = |v: &Mat, t: f64| -> Mat {
        let mut out = Mat::zeros(v.rows(), v.cols());
        for j in 0..v.cols() {
            let col = group_soft_threshold(&v.col(j), t * config.lambda);
            out.set_col(j, &col);
        }
        out
    };

    let mut lip = match config.step_size {
        Some(s) if s > 0.0 => 1.0 / s,
        _ => (2.0 * sym_spectral_norm(&gpp) / m_f).max(f64::MIN_POSITIVE),
    };

    let mut k_cur = Mat::zeros(m, m);
    let mut z = k_cur.clone();
    let mut tau = 1.0f64;
    let mut obj_cur = smooth(&k_cur) + penalty(&k_cur);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..config.max_iter {
        iterations = iter + 1;
        let gz = grad(&z);
        let fz = smooth(&z);

        // Backtracking on the majorization at z.
        let mut cand;
        loop {
            let step = 1.0 / lip;
            cand = prox(&z.sub(&gz.scale(step)), step);
            let diff = cand.sub(&z);
            let quad = fz + gz.dot(&diff) + 0.5 * lip * diff.dot(&diff);
            let fc = smooth(&cand);
            if fc <= quad + 1e-12 * quad.abs().max(1.0) {
                break;
            }
            lip *= 2.0;
            if !lip.is_finite() {
                return Err(Error::NumericalFailure(
                    "backtracking Lipschitz estimate overflowed".into(),
                ));
            }
        }
        if !cand.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite proximal iterate at iteration {iter}"
            )));
        }

        let obj_cand = smooth(&cand) + penalty(&cand);

        if obj_cand <= obj_cur {
            // Accept the accelerated candidate.
            let tau_next = 0.5 * (1.0 + (1.0 + 4.0 * tau * tau).sqrt());
            z = cand.add(&cand.sub(&k_cur).scale((tau - 1.0) / tau_next));
            let rel_change = (obj_cur - obj_cand).abs() / obj_cur.abs().max(1e-300);
            k_cur = cand;
            obj_cur = obj_cand;
            tau = tau_next;
            if rel_change < config.tol && iter > 0 {
                converged = true;
                break;
            }
        } else {
            // Momentum overshoot: keep the best iterate and restart the
            // acceleration from it. Not a convergence signal.
            z = k_cur.clone();
            tau = 1.0;
        }
    }

    Ok(SolveResult {
        k: k_cur,
        converged,
        iterations,
        objective: obj_cur,
    })
}

/// Training provenance stored inside the model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: Option<u64>,
    /// Echo of the training configuration, as human-readable text.
    pub config: String,
    /// Hash of the snapshot bytes the operator was fitted on.
    pub data_hash: Option<u64>,
    pub converged: Option<bool>,
    pub method: String,
}

/// Learned operator, its dictionary, and the reconstruction width.
///
/// The reconstruction map is pure coordinate selection: the first `p` lifted
/// entries are the observables themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanModel {
    pub k: Mat,
    pub dictionary: DictionaryKind,
    /// Observable dimension; H = [I_p 0].
    pub p: usize,
    pub meta: ModelMeta,
}

impl KoopmanModel {
    pub fn validate(&self) -> Result<()> {
        let m = self.dictionary.lifted_dim()?;
        if self.k.rows() != m || self.k.cols() != m {
            return Err(Error::InvalidArgument(format!(
                "operator is {}x{}, dictionary lifts to {m}",
                self.k.rows(),
                self.k.cols()
            )));
        }
        if self.p != self.dictionary.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "p = {} does not match dictionary input dim {}",
                self.p,
                self.dictionary.input_dim()
            )));
        }
        if !self.k.is_finite() {
            return Err(Error::InvalidArgument("operator has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn lifted_dim(&self) -> usize {
        self.k.rows()
    }

    /// One-step observable prediction: reconstruct(K lift(y)).
    pub fn predict_one_step(&self, y: &[f64]) -> Result<Vec<f64>> {
        let lifted = self.dictionary.lift(y)?;
        Ok(reconstruct(self, &self.k.matvec(&lifted)))
    }
}

/// The reconstruction map H = [I_p 0]: the first p lifted entries.
pub fn reconstruct(model: &KoopmanModel, lifted: &[f64]) -> Vec<f64> {
    lifted[..model.p].to_vec()
}

/// Dictionary-free DMD over a random fixed neural lifting: initialize the
/// network, freeze it, and solve the least-squares operator problem.
///
/// Exists as a baseline mode; its accuracy is expected to trail the jointly
/// trained dictionary.
pub fn fixed_dictionary_dmd(
    dataset: &Dataset,
    mlp_spec: &MlpSpec,
    seed: u64,
) -> Result<KoopmanModel> {
    let mut rng = Rng::new(seed).split(0x1417);
    let params = neural::init_params(mlp_spec, &mut rng);
    let dictionary = DictionaryKind::Neural {
        spec: mlp_spec.clone(),
        params,
    };
    let snapshots = build_snapshots(dataset, Split::Train, &dictionary)?;
    let result = solve(&snapshots, &EdmdConfig::default())?;
    Ok(KoopmanModel {
        k: result.k,
        p: dataset.dim(),
        meta: ModelMeta {
            seed: Some(seed),
            config: "fixed random neural dictionary, lambda = 0".into(),
            data_hash: Some(snapshots.content_hash()),
            converged: Some(result.converged),
            method: "fixed-dict-dmd".into(),
        },
        dictionary,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: String,
    p: usize,
    dictionary: DictionaryKind,
    k: Mat,
    meta: ModelMeta,
}

const MODEL_SCHEMA: &str = "koopman-model-v1";

/// Serialize a model to its JSON document. Numbers round-trip bit-exactly.
pub fn model_to_string(model: &KoopmanModel) -> Result<String> {
    let file = ModelFile {
        schema: MODEL_SCHEMA.into(),
        p: model.p,
        dictionary: model.dictionary.clone(),
        k: model.k.clone(),
        meta: model.meta.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(format!("model encode: {e}")))
}

/// Parse a model document written by [`model_to_string`].
pub fn model_from_str(text: &str) -> Result<KoopmanModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("model parse: {e}")))?;
    if file.schema != MODEL_SCHEMA {
        return Err(Error::Parse(format!(
            "unsupported model schema {:?}, expected {MODEL_SCHEMA:?}",
            file.schema
        )));
    }
    let model = KoopmanModel {
        k: file.k,
        dictionary: file.dictionary,
        p: file.p,
        meta: file.meta,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &KoopmanModel, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<KoopmanModel> {
    model_from_str(&std::fs::read_to_string(path)?)
}

/// Relative Frobenius gap between two operators; used by the solver tests
/// and the acceptance suite.
pub fn relative_gap(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).frob_norm() / b.frob_norm().max(1e-300)
}
