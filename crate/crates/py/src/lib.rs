//! Python bindings for the nr-latency simulator.

use nr_latency::control_plane::{sr_wait as core_sr_wait, DciQueue, SrConfig};
use nr_latency::link_adaptation::{self, McsEntry};
use nr_latency::phy_profile::{self, BandwidthProfile};
use nr_latency::resource_grid::{GridGeometry, Placement};
use nr_latency::sim_engine::{self, check_requirement as core_check};
use nr_latency::{
    ControlConfig, ControlVariant, CyclicPrefix, Direction, McsTable, NumerologyProfile, PointConfig,
    Retransmission, Service, SlotType, Ticks,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: nr_latency::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn py_to_json(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn parse_table(name: &str) -> PyResult<McsTable> {
    match name.to_ascii_uppercase().as_str() {
        "LEP" => Ok(McsTable::Lep),
        "HEP" => Ok(McsTable::Hep),
        _ => Err(PyValueError::new_err(format!("unknown MCS table '{name}' (LEP or HEP)"))),
    }
}

fn parse_direction(name: &str) -> PyResult<Direction> {
    match name.to_ascii_uppercase().as_str() {
        "UL" => Ok(Direction::Uplink),
        "DL" => Ok(Direction::Downlink),
        _ => Err(PyValueError::new_err(format!("unknown direction '{name}' (UL or DL)"))),
    }
}

fn parse_slot_type(name: &str) -> PyResult<SlotType> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown slot type '{name}' (full, mini7, mini4)")))
}

fn parse_control(name: &str) -> PyResult<ControlConfig> {
    let v: ControlVariant = serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown control configuration '{name}'")))?;
    Ok(ControlConfig::for_variant(v))
}

fn parse_service(name: &str) -> PyResult<Service> {
    match name.to_ascii_uppercase().as_str() {
        "LLOA" => Ok(Service::Lloa),
        "HLOA" => Ok(Service::Hloa),
        _ => Err(PyValueError::new_err(format!("unknown service '{name}' (LLoA or HLoA)"))),
    }
}

/// Subcarrier spacing, cyclic prefix and derived durations.
#[pyclass(name = "Numerology", frozen)]
struct PyNumerology {
    inner: NumerologyProfile,
}

#[pymethods]
impl PyNumerology {
    #[new]
    #[pyo3(signature = (scs_khz, extended_cp=None))]
    fn new(scs_khz: u32, extended_cp: Option<bool>) -> PyResult<Self> {
        let inner = match extended_cp {
            None => NumerologyProfile::default_for_scs(scs_khz),
            Some(ecp) => {
                let cp = if ecp { CyclicPrefix::Extended } else { CyclicPrefix::Normal };
                NumerologyProfile::from_scs(scs_khz, cp)
            }
        }
        .map_err(err)?;
        Ok(PyNumerology { inner })
    }

    #[getter]
    fn mu(&self) -> u8 {
        self.inner.mu
    }

    #[getter]
    fn scs_khz(&self) -> u32 {
        self.inner.scs_khz
    }

    #[getter]
    fn symbols_per_slot(&self) -> u8 {
        self.inner.symbols_per_slot
    }

    #[getter]
    fn slot_ms(&self) -> f64 {
        self.inner.slot_duration_ms()
    }

    #[getter]
    fn symbol_ms(&self) -> f64 {
        self.inner.symbol_duration_ms()
    }

    fn __repr__(&self) -> String {
        format!("Numerology(scs_khz={}, mu={}, cp={})", self.inner.scs_khz, self.inner.mu, self.inner.cp.name())
    }
}

/// First-fit RB x symbol grid for one link direction.
#[pyclass(name = "SlotGrid")]
struct PySlotGrid {
    inner: nr_latency::SlotGrid,
}

#[pymethods]
impl PySlotGrid {
    #[new]
    #[pyo3(signature = (scs_khz=30, bandwidth_mhz=20, direction="UL", control="conf1"))]
    fn new(scs_khz: u32, bandwidth_mhz: u32, direction: &str, control: &str) -> PyResult<Self> {
        let num = NumerologyProfile::default_for_scs(scs_khz).map_err(err)?;
        let bw = BandwidthProfile::new(bandwidth_mhz, scs_khz).map_err(err)?;
        let geom = GridGeometry::new(&num, &bw, &parse_control(control)?, parse_direction(direction)?).map_err(err)?;
        Ok(PySlotGrid { inner: nr_latency::SlotGrid::new(geom) })
    }

    #[getter]
    fn n_rb(&self) -> u16 {
        self.inner.geometry().n_rb
    }

    /// (first, end) data symbols of every slot.
    #[getter]
    fn data_region(&self) -> (u8, u8) {
        let d = &self.inner.geometry().data;
        (d.start, d.end)
    }

    /// Places `n_rb` x `n_symbols` no earlier than `earliest_ms`. Returns
    /// the placement as a dict plus the waiting time in ms.
    fn allocate<'py>(
        &mut self,
        py: Python<'py>,
        owner: u64,
        n_rb: u16,
        n_symbols: u8,
        earliest_ms: f64,
    ) -> PyResult<(Bound<'py, PyDict>, f64)> {
        let (p, wait) = self.inner.allocate(owner, n_rb, n_symbols, Ticks::from_ms(earliest_ms)).map_err(err)?;
        Ok((placement_dict(py, &p, self.inner.geometry())?, wait.as_ms()))
    }

    /// Fraction of data RB x symbols allocated in [start_ms, end_ms).
    fn utilization(&self, start_ms: f64, end_ms: f64) -> f64 {
        self.inner.utilization(Ticks::from_ms(start_ms)..Ticks::from_ms(end_ms))
    }
}

fn placement_dict<'py>(py: Python<'py>, p: &Placement, g: &GridGeometry) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("slot", p.slot)?;
    d.set_item("first_rb", p.first_rb)?;
    d.set_item("n_rb", p.n_rb)?;
    d.set_item("first_symbol", p.first_symbol)?;
    d.set_item("n_symbols", p.n_symbols)?;
    d.set_item("start_ms", p.start(g).as_ms())?;
    d.set_item("end_ms", p.end(g).as_ms())?;
    Ok(d)
}

/// PDCCH FIFO shared by grants and assignments.
#[pyclass(name = "DciQueue")]
struct PyDciQueue {
    inner: DciQueue,
}

#[pymethods]
impl PyDciQueue {
    /// `capacity=None` is ideal control signalling.
    #[new]
    #[pyo3(signature = (capacity=None))]
    fn new(capacity: Option<u32>) -> PyResult<Self> {
        Ok(PyDciQueue { inner: DciQueue::new(capacity).map_err(err)? })
    }

    fn enqueue(&mut self, id: u64, ready_ms: f64) {
        self.inner.enqueue(id, Ticks::from_ms(ready_ms));
    }

    fn cancel(&mut self, id: u64) -> bool {
        self.inner.cancel(id)
    }

    /// Ids leaving at the occasion at `occasion_ms`, in order.
    fn serve(&mut self, occasion_ms: f64) -> Vec<u64> {
        self.inner.serve(Ticks::from_ms(occasion_ms)).into_iter().map(|d| d.id).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// One simulation point. Keyword arguments override the defaults.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: PointConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut c = PyConfig { inner: PointConfig::default() };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                c.set(&k.extract::<String>()?, &v)?;
            }
        }
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let mut v = serde_json::to_value(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let obj = v.as_object_mut().expect("config serializes to an object");
        if !obj.contains_key(key) {
            return Err(PyValueError::new_err(format!("unknown config key '{key}'")));
        }
        let parsed: serde_json::Value =
            serde_json::from_str(&py_to_json(value)?).map_err(|e| PyValueError::new_err(e.to_string()))?;
        obj.insert(key.to_string(), parsed);
        self.inner = serde_json::from_value(v).map_err(|e| PyValueError::new_err(format!("{key}: {e}")))?;
        Ok(())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }

    fn validate(&self) -> PyResult<()> {
        sim_engine::PointContext::new(&self.inner).map(|_| ()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Config({})", nr_latency::experiment::describe(&self.inner))
    }
}

/// Runs one point to the stopping rule and returns the metrics report.
#[pyfunction]
#[pyo3(signature = (config, seed=1))]
fn run<'py>(py: Python<'py>, config: &PyConfig, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let report = py.detach(|| sim_engine::run(&cfg, seed)).map_err(err)?;
    let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

/// Pass/fail of a report dict against LLoA or HLoA.
#[pyfunction]
fn check_requirement<'py>(py: Python<'py>, report: &Bound<'py, PyAny>, service: &str) -> PyResult<Bound<'py, PyAny>> {
    let r: nr_latency::MetricsReport =
        serde_json::from_str(&py_to_json(report)?).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let check = core_check(&r, parse_service(service)?);
    let d = PyDict::new(py);
    d.set_item("pass", check.pass)?;
    d.set_item("percentile_ms", check.percentile_ms)?;
    d.set_item("budget_ms", check.budget_ms)?;
    d.set_item("margin_ms", check.margin_ms)?;
    Ok(d.into_any())
}

#[pyfunction]
fn slot_duration(mu: u8) -> PyResult<f64> {
    phy_profile::slot_duration(mu).map_err(err)
}

#[pyfunction]
fn total_rbs(bandwidth_mhz: u32, scs_khz: u32) -> PyResult<u16> {
    phy_profile::total_rbs(bandwidth_mhz, scs_khz).map_err(err)
}

/// (T_proc,1, T_proc,2) in ms.
#[pyfunction]
#[pyo3(signature = (mu, ue_capability=2))]
fn processing_times(mu: u8, ue_capability: u8) -> PyResult<(f64, f64)> {
    let t = phy_profile::processing_times(mu, ue_capability).map_err(err)?;
    Ok((t.t_proc1_ms(), t.t_proc2_ms()))
}

fn mcs(cqi: u8, table: &str) -> PyResult<McsEntry> {
    link_adaptation::mcs_from_cqi(cqi, parse_table(table)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (cqi, table="LEP"))]
fn mcs_from_cqi<'py>(py: Python<'py>, cqi: u8, table: &str) -> PyResult<Bound<'py, PyDict>> {
    let m = mcs(cqi, table)?;
    let d = PyDict::new(py);
    d.set_item("index", m.index)?;
    d.set_item("modulation_order", m.modulation_order)?;
    d.set_item("code_rate", m.code_rate())?;
    d.set_item("spectral_efficiency", m.spectral_efficiency)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (cqi, n_rb, n_symbols, table="LEP", layers=2, overhead=0))]
fn transport_block_size(cqi: u8, n_rb: u32, n_symbols: u32, table: &str, layers: u32, overhead: u32) -> PyResult<u32> {
    Ok(link_adaptation::transport_block_size(&mcs(cqi, table)?, n_rb, n_symbols, layers, overhead))
}

#[pyfunction]
#[pyo3(signature = (payload_bytes, cqi, n_symbols, table="LEP", layers=2, overhead=0, max_rb=275))]
fn rbs_for_packet(
    payload_bytes: u32,
    cqi: u8,
    n_symbols: u32,
    table: &str,
    layers: u32,
    overhead: u32,
    max_rb: u16,
) -> PyResult<u16> {
    link_adaptation::rbs_for_packet(payload_bytes * 8, &mcs(cqi, table)?, n_symbols, layers, overhead, max_rb)
        .map_err(err)
}

/// SR waiting time in ms for a uniform draw `p`.
#[pyfunction]
#[pyo3(signature = (p, n_ue, slot_ms, control="conf1"))]
fn sr_wait(p: f64, n_ue: usize, slot_ms: f64, control: &str) -> PyResult<f64> {
    let sr = SrConfig::new(&parse_control(control)?, n_ue).map_err(err)?;
    Ok(core_sr_wait(p, &sr, Ticks::from_ms(slot_ms)).as_ms())
}

#[pyfunction]
fn reliability_bound(bler: f64, retransmission: &str) -> PyResult<f64> {
    let r: Retransmission = retransmission.parse().map_err(err)?;
    Ok(nr_latency::latency_engine::reliability_bound(bler, r))
}

#[pyfunction]
fn slot_type_symbols(slot_type: &str, data_symbols: u8) -> PyResult<u8> {
    Ok(parse_slot_type(slot_type)?.n_symbols(data_symbols))
}

#[pymodule]
fn nrlat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TICKS_PER_MS", nr_latency::TICKS_PER_MS)?;
    m.add_class::<PyNumerology>()?;
    m.add_class::<PySlotGrid>()?;
    m.add_class::<PyDciQueue>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(check_requirement, m)?)?;
    m.add_function(wrap_pyfunction!(slot_duration, m)?)?;
    m.add_function(wrap_pyfunction!(total_rbs, m)?)?;
    m.add_function(wrap_pyfunction!(processing_times, m)?)?;
    m.add_function(wrap_pyfunction!(mcs_from_cqi, m)?)?;
    m.add_function(wrap_pyfunction!(transport_block_size, m)?)?;
    m.add_function(wrap_pyfunction!(rbs_for_packet, m)?)?;
    m.add_function(wrap_pyfunction!(sr_wait, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_bound, m)?)?;
    m.add_function(wrap_pyfunction!(slot_type_symbols, m)?)?;
    Ok(())
}
