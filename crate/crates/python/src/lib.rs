use pyo3::prelude::*;

#[pymodule]
fn soundstyle_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
