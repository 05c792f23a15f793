//! Python bindings: molecules, templates, fingerprints, screening and
//! checkpointed template-relevance models.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use retrohop::chemgraph;
use retrohop::{eval, fingerprints, model, screen};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Molecule", frozen, from_py_object, module = "retrohop_py")]
#[derive(Clone)]
struct PyMolecule(chemgraph::Molecule);

#[pymethods]
impl PyMolecule {
    #[new]
    fn new(smiles: &str) -> PyResult<Self> {
        chemgraph::parse_smiles(smiles).map(Self).map_err(value_err)
    }

    fn canonical_smiles(&self) -> String {
        self.0.canonical_smiles()
    }

    fn to_smiles(&self) -> String {
        self.0.to_smiles()
    }

    #[getter]
    fn num_atoms(&self) -> usize {
        self.0.atoms().len()
    }

    #[getter]
    fn num_bonds(&self) -> usize {
        self.0.bonds().len()
    }

    /// True if the SMARTS-like pattern embeds in this molecule.
    fn has_substructure(&self, pattern: &str) -> PyResult<bool> {
        let p = chemgraph::parse_pattern(pattern).map_err(value_err)?;
        Ok(chemgraph::subgraph_match(&p, &self.0).is_some())
    }

    /// Counted (or binary) Morgan fingerprint as a list of floats.
    #[pyo3(signature = (radius = 2, size = 2048, counted = false))]
    fn morgan(&self, radius: usize, size: usize, counted: bool) -> PyResult<Vec<f64>> {
        if size == 0 {
            return Err(value_err("size must be positive"));
        }
        Ok(fingerprints::morgan_fp(&self.0, radius, size, counted).values)
    }

    /// Indices of set bits in the path screening fingerprint.
    #[pyo3(signature = (width = fingerprints::DEFAULT_SCREEN_WIDTH))]
    fn path_bits(&self, width: usize) -> PyResult<Vec<usize>> {
        Ok(fingerprints::path_fp(&self.0, width).map_err(value_err)?.ones().collect())
    }

    fn __repr__(&self) -> String {
        format!("Molecule('{}')", self.0.to_smiles())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0.canonical_smiles() == other.0.canonical_smiles()
    }
}

#[pyclass(name = "Template", frozen, from_py_object, module = "retrohop_py")]
#[derive(Clone)]
struct PyTemplate(chemgraph::ReactionTemplate);

#[pymethods]
impl PyTemplate {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        chemgraph::parse_template(text).map(Self).map_err(value_err)
    }

    #[getter]
    fn source(&self) -> String {
        self.0.source_text().to_string()
    }

    /// Applies the retro template; each result is a list of reactant SMILES.
    fn apply(&self, product: &PyMolecule) -> Vec<Vec<String>> {
        chemgraph::apply_template(&self.0, &product.0).iter().map(|s| s.smiles()).collect()
    }

    fn matches(&self, product: &PyMolecule) -> bool {
        chemgraph::subgraph_match(&self.0.product_pattern, &product.0).is_some()
    }

    fn __repr__(&self) -> String {
        format!("Template('{}')", self.0.source_text())
    }
}

/// Fingerprint prefilter over a fixed template list.
#[pyclass(name = "TemplateScreen", frozen, module = "retrohop_py")]
struct PyTemplateScreen(screen::TemplateScreen);

#[pymethods]
impl PyTemplateScreen {
    #[new]
    #[pyo3(signature = (templates, width = fingerprints::DEFAULT_SCREEN_WIDTH))]
    fn new(templates: Vec<PyTemplate>, width: usize) -> PyResult<Self> {
        let ts: Vec<_> = templates.into_iter().map(|t| t.0).collect();
        screen::TemplateScreen::new(&ts, width).map(Self).map_err(value_err)
    }

    /// Per-template pass flags; `False` means the template cannot match.
    fn mask(&self, mol: &PyMolecule) -> Vec<bool> {
        self.0.mask(&mol.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// A trained model restored from a checkpoint file.
#[pyclass(name = "Model", frozen, module = "retrohop_py")]
struct PyModel {
    model: model::StoredModel,
    templates: Vec<chemgraph::ReactionTemplate>,
    screen: screen::TemplateScreen,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let mut ck = model::load_checkpoint(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        ck.model.as_trainable_mut().finalize();
        let screen = screen::TemplateScreen::new(&ck.templates, fingerprints::DEFAULT_SCREEN_WIDTH).map_err(value_err)?;
        Ok(Self { model: ck.model, templates: ck.templates, screen })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.model {
            model::StoredModel::Mhn(_) => "mhn",
            model::StoredModel::Dnn(_) => "dnn",
        }
    }

    #[getter]
    fn num_templates(&self) -> usize {
        self.templates.len()
    }

    /// Raw template scores for one product (`-inf` where the model cannot score).
    fn scores(&self, product: &PyMolecule) -> PyResult<Vec<f64>> {
        let m = self.model.as_trainable();
        let fp = retrohop::numkernel::Mat::row_vector(&m.featurizer().molecule(&product.0));
        Ok(m.score_fps(&fp).map_err(value_err)?.data)
    }

    /// Top templates as `(template_id, score)` pairs, optionally FPF-screened.
    #[pyo3(signature = (product, top = 10, fpf = true))]
    fn rank(&self, product: &PyMolecule, top: usize, fpf: bool) -> PyResult<Vec<(usize, f64)>> {
        let scores = self.scores(product)?;
        let mut ranking = eval::rank_scores(&scores);
        if fpf {
            let mask = self.screen.mask(&product.0);
            ranking.retain(|&k| mask[k]);
        }
        Ok(ranking.into_iter().take(top).map(|k| (k, scores[k])).collect())
    }

    /// Executes the ranked templates until `budget` have been tried; returns
    /// the distinct reactant sets in rank order.
    #[pyo3(signature = (product, budget = 10))]
    fn predict_reactants(&self, product: &PyMolecule, budget: usize) -> PyResult<Vec<Vec<String>>> {
        let mut ranking = eval::rank_scores(&self.scores(product)?);
        let mask = self.screen.mask(&product.0);
        ranking.retain(|&k| mask[k]);
        let run = eval::execute_ranking(&self.templates, &ranking, &product.0, budget);
        Ok(run.sets.iter().map(|s| s.smiles()).collect())
    }

    fn template(&self, id: usize) -> PyResult<PyTemplate> {
        self.templates.get(id).cloned().map(PyTemplate).ok_or_else(|| value_err(format!("no template {id}")))
    }
}

/// Wilson score interval for `hits` out of `n`; `None` when `n == 0`.
#[pyfunction]
fn wilson_interval(hits: usize, n: usize) -> Option<(f64, f64)> {
    eval::wilson_interval(hits, n)
}

/// Log-gamma pooling of per-reactant fingerprint columns.
#[pyfunction]
fn lgamma_pool(columns: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    model::lgamma_pool(&columns).map_err(value_err)
}

#[pyfunction]
fn canonicalize(smiles: &str) -> PyResult<String> {
    Ok(chemgraph::parse_smiles(smiles).map_err(value_err)?.canonical_smiles())
}

/// Runs the command-line interface in-process; returns the exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    let mut argv = vec!["retrohop".to_string()];
    argv.extend(args);
    retrohop::cli::dispatch(&argv)
}

#[pymodule]
fn retrohop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMolecule>()?;
    m.add_class::<PyTemplate>()?;
    m.add_class::<PyTemplateScreen>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(lgamma_pool, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
