use std::path::PathBuf;

use afpseg::nn::{load_checkpoint, save_checkpoint, Network, NetworkConfig};
use afpseg::pipeline::{
    evaluate, generate_dataset, generate_in_memory, predict, read_dataset, train, EvalReport,
    TextureSpec, TrainConfig,
};
use afpseg::raster::Raster;
use afpseg::{render_scene, sample_scene, Class, GeneratorConfig, TextureSource};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: afpseg::Error) -> PyErr {
    match e {
        afpseg::Error::File { .. } | afpseg::Error::Image { .. } => {
            PyIOError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows<T: Copy>(r: &Raster<T>) -> Vec<Vec<T>> {
    r.data.chunks(r.width.max(1)).map(<[T]>::to_vec).collect()
}

/// Label rows as integer lists (a `Vec<u8>` would become `bytes`).
fn label_rows(r: &Raster<u8>) -> Vec<Vec<u32>> {
    r.data
        .chunks(r.width.max(1))
        .map(|row| row.iter().map(|&v| u32::from(v)).collect())
        .collect()
}

fn from_rows(depth: Vec<Vec<f64>>) -> PyResult<Raster<f64>> {
    let h = depth.len();
    let w = depth.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || depth.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err(
            "depth must be a non-empty rectangular 2-D array",
        ));
    }
    Raster::from_vec(h, w, depth.concat()).map_err(to_py)
}

/// Scene generator settings.
#[pyclass(name = "GeneratorConfig", from_py_object)]
#[derive(Clone)]
struct PyGeneratorConfig {
    inner: GeneratorConfig,
}

#[pymethods]
impl PyGeneratorConfig {
    /// 200x300 maps with 36 px tows.
    #[staticmethod]
    fn paper() -> Self {
        Self {
            inner: GeneratorConfig::paper_scale(),
        }
    }

    /// 64x96 maps with 12 px tows.
    #[staticmethod]
    fn desk() -> Self {
        Self {
            inner: GeneratorConfig::desk_scale(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: GeneratorConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    fn without_nuisance(&self) -> Self {
        Self {
            inner: self.inner.clone().without_nuisance(),
        }
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height_px
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width_px
    }

    #[getter]
    fn tow_width(&self) -> f64 {
        self.inner.tow_width_px
    }

    fn __repr__(&self) -> String {
        format!("GeneratorConfig({})", self.to_json())
    }
}

/// Renders one synthetic scene; returns `(depth, labels)` as nested lists.
#[pyfunction]
#[pyo3(signature = (config, seed))]
fn render(config: &PyGeneratorConfig, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<u32>>)> {
    let textures = TextureSource::default();
    let scene = sample_scene(&config.inner, seed, textures.len()).map_err(to_py)?;
    let ex = render_scene(&scene, &textures).map_err(to_py)?;
    Ok((rows(&ex.x), label_rows(&ex.y)))
}

/// Writes `count` samples to an AFPD container.
#[pyfunction]
fn generate(config: &PyGeneratorConfig, count: usize, seed: u64, path: PathBuf) -> PyResult<()> {
    generate_dataset(&config.inner, count, seed, &TextureSpec::default(), &path).map_err(to_py)
}

/// Number of samples and map extents of an AFPD container.
#[pyfunction]
fn dataset_info(path: PathBuf) -> PyResult<(usize, usize, usize)> {
    let ds = read_dataset(&path).map_err(to_py)?;
    Ok((ds.samples.len(), ds.height, ds.width))
}

#[pyfunction]
fn class_names() -> Vec<&'static str> {
    Class::ALL.iter().map(|c| c.name()).collect()
}

/// Pixel confusion table in percent, rows = prediction.
#[pyclass(name = "EvalReport", skip_from_py_object)]
struct PyEvalReport {
    inner: EvalReport,
}

#[pymethods]
impl PyEvalReport {
    #[getter]
    fn confusion(&self) -> Vec<Vec<f64>> {
        self.inner.confusion.iter().map(|r| r.to_vec()).collect()
    }

    #[getter]
    fn accuracy(&self) -> f64 {
        self.inner.accuracy
    }

    #[getter]
    fn pixels(&self) -> u64 {
        self.inner.pixels
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// U-Net segmentation network (32-bit weights).
#[pyclass(name = "Network", skip_from_py_object)]
struct PyNetwork {
    inner: Network<f32>,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (levels = 4, base_features = 16, seed = 0))]
    fn new(levels: usize, base_features: usize, seed: u64) -> PyResult<Self> {
        let config = NetworkConfig {
            levels,
            base_features,
            ..NetworkConfig::default()
        };
        Ok(Self {
            inner: Network::new(config, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.config().levels
    }

    /// Class id per pixel for a 2-D depth map of any size.
    fn predict(&self, py: Python<'_>, depth: Vec<Vec<f64>>) -> PyResult<Vec<Vec<u32>>> {
        let depth = from_rows(depth)?;
        let labels = py.detach(|| predict(&self.inner, &depth)).map_err(to_py)?;
        Ok(label_rows(&labels))
    }

    /// Confusion table over every sample of an AFPD container.
    fn evaluate(&self, py: Python<'_>, path: PathBuf) -> PyResult<PyEvalReport> {
        let ds = read_dataset(&path).map_err(to_py)?;
        let inner = py.detach(|| evaluate(&self.inner, &ds)).map_err(to_py)?;
        Ok(PyEvalReport { inner })
    }

    /// Confusion table over freshly generated samples.
    fn evaluate_generated(
        &self,
        py: Python<'_>,
        config: &PyGeneratorConfig,
        count: usize,
        seed: u64,
    ) -> PyResult<PyEvalReport> {
        let inner = py
            .detach(|| {
                let ds = generate_in_memory(&config.inner, count, seed, &TextureSpec::default())?;
                evaluate(&self.inner, &ds)
            })
            .map_err(to_py)?;
        Ok(PyEvalReport { inner })
    }
}

/// Runs a training job described by a JSON config (same schema as the CLI).
/// Returns the trained network and `(epoch, train_loss, val_accuracy)` rows.
#[pyfunction]
fn train_json(py: Python<'_>, config: &str) -> PyResult<(PyNetwork, Vec<(usize, f64, f64)>)> {
    let cfg: TrainConfig =
        serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (net, report) = py.detach(|| train(&cfg)).map_err(to_py)?;
    let rows = report
        .epochs
        .iter()
        .map(|m| (m.epoch, m.train_loss, m.val_accuracy))
        .collect();
    Ok((PyNetwork { inner: net }, rows))
}

#[pymodule]
fn afpseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeneratorConfig>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_info, m)?)?;
    m.add_function(wrap_pyfunction!(class_names, m)?)?;
    m.add_function(wrap_pyfunction!(train_json, m)?)?;
    Ok(())
}
