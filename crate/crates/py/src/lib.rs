//! Python bindings: a float64 tensor type plus the layers, encodings, metrics
//! and training entry point of the core crate.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cylinpaint::conv::{ConvLayer, PadMode};
use cylinpaint::pipeline::{self, io, KeyValues, MaskSpec, RunConfig, SynthSpec};
use cylinpaint::posenc::SpeMode;
use cylinpaint::probe::{self, Axis};
use cylinpaint::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) | Error::Format(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Dense `[N, C, H, W]` float64 tensor.
#[pyclass(name = "Tensor", module = "cylinpaint_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyTensor {
    inner: cylinpaint::Tensor<f64>,
}

impl From<cylinpaint::Tensor<f64>> for PyTensor {
    fn from(inner: cylinpaint::Tensor<f64>) -> Self {
        PyTensor { inner }
    }
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: [usize; 4], data: Vec<f64>) -> PyResult<Self> {
        Ok(cylinpaint::Tensor::from_vec(shape, data).map_err(to_py)?.into())
    }

    #[staticmethod]
    fn zeros(shape: [usize; 4]) -> Self {
        cylinpaint::Tensor::zeros(shape).into()
    }

    #[getter]
    fn shape(&self) -> [usize; 4] {
        self.inner.shape()
    }

    /// Flat row-major values.
    fn tolist(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn at(&self, n: usize, c: usize, h: usize, w: usize) -> PyResult<f64> {
        let [sn, sc, sh, sw] = self.inner.shape();
        if n >= sn || c >= sc || h >= sh || w >= sw {
            return Err(PyValueError::new_err(format!("index ({n}, {c}, {h}, {w}) outside {:?}", self.inner.shape())));
        }
        Ok(self.inner.at(n, c, h, w))
    }

    fn shift_azimuth(&self, k: isize) -> Self {
        self.inner.circular_shift_azimuth(k).into()
    }

    fn max_abs_diff(&self, other: &PyTensor) -> PyResult<f64> {
        self.inner.max_abs_diff(&other.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

#[pyfunction]
#[pyo3(signature = (x, weight, bias=None, stride=(1, 1), dilation=(1, 1), pad_mode="circular"))]
fn conv2d(
    x: &PyTensor,
    weight: &PyTensor,
    bias: Option<Vec<f64>>,
    stride: (usize, usize),
    dilation: (usize, usize),
    pad_mode: &str,
) -> PyResult<PyTensor> {
    let co = weight.inner.shape()[0];
    let layer = ConvLayer::new(weight.inner.clone(), bias.unwrap_or_else(|| vec![0.0; co]), stride, dilation, parse::<PadMode>(pad_mode)?)
        .map_err(to_py)?;
    Ok(layer.forward(&x.inner).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (height, width, az_pairs=8, pol_pairs=8, mode="index"))]
fn build_spe(height: usize, width: usize, az_pairs: usize, pol_pairs: usize, mode: &str) -> PyResult<PyTensor> {
    let vol = cylinpaint::posenc::build_spe(height, width, az_pairs, pol_pairs, parse::<SpeMode>(mode)?).map_err(to_py)?;
    Ok(vol.data.into())
}

#[pyfunction]
#[pyo3(signature = (height, width, known_fraction=0.5))]
fn make_mask(height: usize, width: usize, known_fraction: f64) -> PyResult<PyTensor> {
    let spec = MaskSpec::new(known_fraction).map_err(to_py)?;
    Ok(pipeline::make_mask::<f64>(&spec, height, width).map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (family="stripes", seed=0, height=64, width=128))]
fn synth(family: &str, seed: u64, height: usize, width: usize) -> PyResult<PyTensor> {
    let spec = SynthSpec { family: parse(family)?, seed, height, width };
    Ok(pipeline::synth_panorama::<f64>(spec).map_err(to_py)?.into())
}

#[pyfunction]
fn seam_metric(image: &PyTensor) -> PyResult<f64> {
    pipeline::seam_metric(&image.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, peak=2.0))]
fn psnr(a: &PyTensor, b: &PyTensor, peak: f64) -> PyResult<f64> {
    pipeline::psnr(&a.inner, &b.inner, peak).map_err(to_py)
}

#[pyfunction]
fn ssim(a: &PyTensor, b: &PyTensor) -> PyResult<f64> {
    pipeline::ssim(&a.inner, &b.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (features, axis="azimuth"))]
fn line_pattern_stat(features: &PyTensor, axis: &str) -> PyResult<Vec<f64>> {
    let axis = match axis {
        "azimuth" => Axis::Azimuth,
        "polar" => Axis::Polar,
        other => return Err(PyValueError::new_err(format!("axis must be 'azimuth' or 'polar', got {other:?}"))),
    };
    probe::line_pattern_stat(&features.inner, axis).map_err(to_py)
}

#[pyfunction]
fn read_cylt(path: PathBuf) -> PyResult<PyTensor> {
    Ok(io::read_cylt::<f64>(path).map_err(to_py)?.into())
}

#[pyfunction]
fn write_cylt(path: PathBuf, tensor: &PyTensor) -> PyResult<()> {
    io::write_cylt(path, &tensor.inner).map_err(to_py)
}

#[pyfunction]
fn read_ppm(path: PathBuf) -> PyResult<PyTensor> {
    Ok(io::read_ppm::<f64>(path).map_err(to_py)?.into())
}

#[pyfunction]
fn write_ppm(path: PathBuf, image: &PyTensor) -> PyResult<()> {
    io::write_ppm(path, &image.inner).map_err(to_py)
}

/// Runs a training config and returns the summary numbers.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn train<'py>(py: Python<'py>, config: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = RunConfig::from_kv(&KeyValues::load(config).map_err(to_py)?).map_err(to_py)?;
    if let Some(o) = out_dir {
        cfg.out_dir = o;
    }
    let rep = pipeline::train(&cfg).map_err(to_py)?;
    let fin = rep.final_eval();
    let d = PyDict::new(py);
    d.set_item("initial_val_l1", rep.initial_val_l1())?;
    d.set_item("final_val_l1", fin.l1)?;
    d.set_item("final_train_l1", rep.final_train_l1())?;
    d.set_item("seam", fin.seam)?;
    d.set_item("psnr", fin.psnr)?;
    d.set_item("ssim", fin.ssim)?;
    d.set_item("out_dir", rep.out_dir)?;
    Ok(d)
}

#[pymodule]
fn cylinpaint_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_function(wrap_pyfunction!(conv2d, m)?)?;
    m.add_function(wrap_pyfunction!(build_spe, m)?)?;
    m.add_function(wrap_pyfunction!(make_mask, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(seam_metric, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(line_pattern_stat, m)?)?;
    m.add_function(wrap_pyfunction!(read_cylt, m)?)?;
    m.add_function(wrap_pyfunction!(write_cylt, m)?)?;
    m.add_function(wrap_pyfunction!(read_ppm, m)?)?;
    m.add_function(wrap_pyfunction!(write_ppm, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
