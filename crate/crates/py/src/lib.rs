//! Python bindings. Byte rows cross the boundary as `bytes`, matrices as
//! lists of lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use odxu_core::gbdt::TreeEnsemble;
use odxu_core::payload::{extract_capture, label_packets, LabelRule, LabelTable, Payload, PayloadDataset};
use odxu_core::pipeline::{self, FittedPipeline, Model, ModelKind, ScenarioConfig, SourceModels, TransferRunner};
use odxu_core::synth::BlobSpec;
use odxu_core::uq::{exact_shap, UqMethod};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: odxu_core::Error) -> PyErr {
    match e {
        odxu_core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn rows_to_features(rows: &[Vec<u8>]) -> Array2<f64> {
    let mut x = Array2::zeros((rows.len(), odxu_core::PAYLOAD_LEN));
    for (i, r) in rows.iter().enumerate() {
        for (j, &b) in Payload::from_slice(r).as_bytes().iter().enumerate() {
            x[[i, j]] = b as f64 / 255.0;
        }
    }
    x
}

fn matrix(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Labeled 1500-byte payload rows.
#[pyclass(name = "Dataset", module = "odxu", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: PayloadDataset,
}

#[pymethods]
impl PyDataset {
    /// CSV or binary file, sniffed by content.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: PayloadDataset::load(&path).map_err(err)?,
        })
    }

    /// Synthetic corpus. `kind` is "three_class" or "confusable".
    #[staticmethod]
    #[pyo3(signature = (kind, rows_per_class, seed, shift=0.0))]
    fn synthetic(kind: &str, rows_per_class: usize, seed: u64, shift: f64) -> PyResult<Self> {
        let spec = match kind {
            "three_class" => BlobSpec::three_class(rows_per_class, seed),
            "confusable" => BlobSpec::confusable(rows_per_class, rows_per_class, rows_per_class, seed),
            _ => return Err(PyValueError::new_err(format!("unknown corpus kind {kind:?}"))),
        };
        let spec = if shift > 0.0 { spec.shifted(shift, seed.wrapping_add(1)) } else { spec };
        Ok(PyDataset {
            inner: spec.dataset().map_err(err)?,
        })
    }

    /// Extract payloads from a pcap capture. `rules_json` is a JSON list of
    /// labeling rules; unmatched packets are benign.
    #[staticmethod]
    #[pyo3(signature = (path, rules_json=None))]
    fn from_pcap(path: PathBuf, rules_json: Option<&str>) -> PyResult<Self> {
        let rules: Vec<LabelRule> = match rules_json {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => Vec::new(),
        };
        let f = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let (payloads, _) = extract_capture(std::io::BufReader::new(f)).map_err(err)?;
        let mut table = LabelTable::new();
        let rows = label_packets(payloads, &rules, &mut table);
        Ok(PyDataset {
            inner: PayloadDataset::new(rows, table),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn class_names(&self) -> Vec<String> {
        self.inner.labels.names().to_vec()
    }

    fn labels(&self) -> Vec<String> {
        let t = &self.inner.labels;
        self.inner.rows.iter().map(|r| t.name(r.label).unwrap_or("?").to_string()).collect()
    }

    fn payloads(&self) -> Vec<Vec<u8>> {
        self.inner.rows.iter().map(|r| r.bytes.as_bytes().to_vec()).collect()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }
}

/// Pipeline settings, built from JSON; missing fields take defaults.
#[pyclass(name = "Config", module = "odxu", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: pipeline::PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (json=None, seed=None))]
    fn new(json: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let mut cfg: pipeline::PipelineConfig = match json {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => Default::default(),
        };
        if let Some(s) = seed {
            cfg = cfg.with_seed(s);
        }
        cfg.validate().map_err(err)?;
        Ok(PyConfig { inner: cfg })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("config serializes")
    }
}

/// Autoencoder, clustering encoder and boosted-tree classifier.
#[pyclass(name = "Pipeline", module = "odxu")]
struct PyPipeline {
    inner: FittedPipeline,
    #[pyo3(get)]
    report: BTreeMap<String, f64>,
}

#[pymethods]
impl PyPipeline {
    #[staticmethod]
    fn fit(data: &PyDataset, config: &PyConfig) -> PyResult<Self> {
        let out = pipeline::fit_pipeline(&data.inner, &config.inner).map_err(err)?;
        Ok(PyPipeline {
            inner: out.model,
            report: out.report,
        })
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes.clone()
    }

    /// Latent vectors for raw payload rows.
    fn latent(&self, rows: Vec<Vec<u8>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix(&self.inner.latent(rows_to_features(&rows).view()).map_err(err)?))
    }

    fn predict_proba(&self, rows: Vec<Vec<u8>>) -> PyResult<Vec<Vec<f64>>> {
        let z = self.inner.latent(rows_to_features(&rows).view()).map_err(err)?;
        Ok(matrix(&self.inner.clf.predict_proba_batch(z.view()).map_err(err)?))
    }

    fn predict(&self, rows: Vec<Vec<u8>>) -> PyResult<Vec<String>> {
        let p = self.inner.predict(rows_to_features(&rows).view()).map_err(err)?;
        Ok(p.into_iter().map(|k| self.inner.classes[k].clone()).collect())
    }

    /// Uncertainty per row from a score-based method ("confidence" or "entropy").
    fn uncertainty(&self, rows: Vec<Vec<u8>>, method: &str) -> PyResult<Vec<f64>> {
        let m: UqMethod = method.parse().map_err(err)?;
        if m.variant().is_some() {
            return Err(PyValueError::new_err("metamodel methods need a trained metamodel; use misclassification()"));
        }
        let z = self.inner.latent(rows_to_features(&rows).view()).map_err(err)?;
        odxu_core::uq::score_with(m, &self.inner.clf, z.view(), None).map_err(err)
    }

    /// Exact interventional Shapley values of the latent features for one
    /// row's `class` probability against background rows.
    fn shap(&self, row: Vec<u8>, background: Vec<Vec<u8>>, class: usize) -> PyResult<(Vec<f64>, f64, f64)> {
        let z = self.inner.latent(rows_to_features(&[row]).view()).map_err(err)?;
        let bg = self.inner.latent(rows_to_features(&background).view()).map_err(err)?;
        let r = exact_shap(&self.inner.clf, z.row(0).as_slice().unwrap(), bg.view(), class).map_err(err)?;
        Ok((r.phi, r.base_value, r.full_value))
    }

    /// Writes ae.bin, dec.bin, gbdt.bin and classes.json into `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let i = &self.inner;
        for (name, m) in [
            ("ae.bin", Model::Autoencoder(i.ae.clone())),
            ("dec.bin", Model::Dec(i.dec.clone())),
            ("gbdt.bin", Model::Gbdt(i.clf.clone())),
        ] {
            pipeline::persist(&m, &dir.join(name)).map_err(err)?;
        }
        let classes = serde_json::to_vec(&i.classes).expect("names serialize");
        std::fs::write(dir.join("classes.json"), classes).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[staticmethod]
    #[pyo3(signature = (dir, benign="Benign"))]
    fn load(dir: PathBuf, benign: &str) -> PyResult<Self> {
        let buf = std::fs::read(dir.join("classes.json")).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let classes: Vec<String> = serde_json::from_slice(&buf).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let benign = classes
            .iter()
            .position(|c| c == benign)
            .ok_or_else(|| PyValueError::new_err(format!("no class named {benign:?}")))?;
        let ae = match pipeline::load(ModelKind::Autoencoder, &dir.join("ae.bin")).map_err(err)? {
            Model::Autoencoder(m) => m,
            _ => unreachable!(),
        };
        let dec = match pipeline::load(ModelKind::Dec, &dir.join("dec.bin")).map_err(err)? {
            Model::Dec(m) => m,
            _ => unreachable!(),
        };
        let clf: TreeEnsemble = match pipeline::load(ModelKind::Gbdt, &dir.join("gbdt.bin")).map_err(err)? {
            Model::Gbdt(m) => m,
            _ => unreachable!(),
        };
        Ok(PyPipeline {
            inner: FittedPipeline { classes, benign, ae, dec, clf },
            report: BTreeMap::new(),
        })
    }
}

type UqTable = BTreeMap<String, (f64, f64)>;

fn uq_table(out: &pipeline::UqOutcome) -> UqTable {
    out.methods.iter().map(|(m, r)| (m.name().to_string(), (r.auroc, r.tp_at_tn))).collect()
}

/// Misclassification detection: method name to (AUROC, TPR at 95% TNR).
#[pyfunction]
fn misclassification(data: &PyDataset, config: &PyConfig) -> PyResult<UqTable> {
    Ok(uq_table(&pipeline::run_misclassification(&data.inner, &config.inner).map_err(err)?))
}

/// Open-set recognition with `unknown` held out of training.
#[pyfunction]
fn open_set(data: &PyDataset, unknown: &str, config: &PyConfig) -> PyResult<UqTable> {
    Ok(uq_table(&pipeline::run_osr(&data.inner, unknown, &config.inner).map_err(err)?))
}

/// Transfer a fitted pipeline to `target`. With `case` set, returns one
/// accuracy; otherwise the full grid as (case, portion, accuracy) triples.
#[pyfunction]
#[pyo3(signature = (source, target, config, case=None, portion=0.5))]
fn transfer(
    py: Python<'_>,
    source: &PyPipeline,
    target: &PyDataset,
    config: &PyConfig,
    case: Option<usize>,
    portion: f64,
) -> PyResult<Py<PyAny>> {
    let src: SourceModels = source.inner.clone().into();
    let mut runner = TransferRunner::new(&src, &target.inner, &config.inner).map_err(err)?;
    match case {
        Some(n) => {
            let sc = ScenarioConfig::case(n, portion).map_err(err)?;
            let acc = runner.run(&sc).map_err(err)?.accuracy;
            Ok(acc.into_pyobject(py)?.into_any().unbind())
        }
        None => {
            let cells = runner.grid(&config.inner.transfer.portions).map_err(err)?;
            let v: Vec<(usize, f64, f64)> = cells.iter().map(|c| (c.case, c.portion, c.accuracy)).collect();
            Ok(v.into_pyobject(py)?.into_any().unbind())
        }
    }
}

/// Area under the ROC curve with ties counted as one half.
#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    odxu_core::metrics::auroc(&scores, &labels).map_err(err)
}

#[pymodule]
fn odxu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(misclassification, m)?)?;
    m.add_function(wrap_pyfunction!(open_set, m)?)?;
    m.add_function(wrap_pyfunction!(transfer, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add("PAYLOAD_LEN", odxu_core::PAYLOAD_LEN)?;
    Ok(())
}
