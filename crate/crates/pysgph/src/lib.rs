//! Python bindings for the stochastic Galerkin / port-Hamiltonian
//! pipeline: basis bookkeeping, cubature, assembly, simulation, reduction
//! and H2 error analysis.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sgph::freq::{h2_error_norm, h2_norm, siso_restriction};
use sgph::mor::{complete_basis, reduce, soar};
use sgph::paramodel::{build_msd, freeze_parameters};
use sgph::pcbasis::PcBasis;
use sgph::phform::{embed_second_order, validate_ph, Provenance};
use sgph::sgalerkin::assemble;
use sgph::simulate::{
    galerkin_hamiltonian_on_grid, run_galerkin, sample_statistics_on_grid, uniform_grid,
    InputSignal,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Number of total-degree basis polynomials: (q + d)! / (q! d!).
#[pyfunction]
fn basis_size(q: usize, d: usize) -> PyResult<u128> {
    sgph::pcbasis::basis_count(q, d).map_err(err)
}

/// Node count of the degree-5 cubature in dimension q.
#[pyfunction]
fn cubature_nodes(q: usize) -> PyResult<usize> {
    Ok(sgph::quadrature::stroud5(q).map_err(err)?.len())
}

/// Stochastic Galerkin projection of the mass-spring-damper benchmark.
#[pyclass]
struct MsdGalerkin {
    sys: sgph::paramodel::ParametricSecondOrderSystem,
    basis: PcBasis,
    gal: sgph::sgalerkin::GalerkinSecondOrderSystem,
}

#[pymethods]
impl MsdGalerkin {
    /// means: the 14 parameter means (m1..m4, d1..d4, k1..k6);
    /// halfwidth: relative variation; degree: PC total degree;
    /// free: optional indices of the parameters kept random.
    #[new]
    #[pyo3(signature = (means, halfwidth, degree, free=None))]
    fn new(
        means: Vec<f64>,
        halfwidth: f64,
        degree: usize,
        free: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let full = build_msd(&means, halfwidth).map_err(err)?;
        let sys = match free {
            Some(f) => freeze_parameters(&full, &f).map_err(err)?,
            None => full,
        };
        let basis = PcBasis::new(sys.domain.clone(), degree).map_err(err)?;
        let gal = assemble(&sys, &basis).map_err(err)?;
        Ok(Self { sys, basis, gal })
    }

    #[getter]
    fn q(&self) -> usize {
        self.basis.q()
    }

    #[getter]
    fn s(&self) -> usize {
        self.gal.s()
    }

    #[getter]
    fn n(&self) -> usize {
        self.gal.n()
    }

    #[getter]
    fn ns(&self) -> usize {
        self.gal.ns()
    }

    /// Simulate with the chirp (or zero) input; returns
    /// (times, mean, std, hamiltonian) on a uniform grid.
    #[pyo3(signature = (t_end, eps_rel=1e-4, eps_abs=1e-6, signal="chirp", grid_points=1001))]
    fn simulate(
        &self,
        t_end: f64,
        eps_rel: f64,
        eps_abs: f64,
        signal: &str,
        grid_points: usize,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let sig = match signal {
            "chirp" => InputSignal::Chirp,
            "zero" => InputSignal::Zero,
            other => return Err(PyValueError::new_err(format!("unknown signal \"{other}\""))),
        };
        let run = run_galerkin(&self.gal, &sig, t_end, eps_rel, eps_abs).map_err(err)?;
        let grid = uniform_grid(t_end, grid_points);
        let (mean, std) = sample_statistics_on_grid(&self.gal, &run, &grid);
        let ham = galerkin_hamiltonian_on_grid(&self.gal, &run, &grid);
        Ok((grid, mean, std, ham))
    }

    /// Check the port-Hamiltonian structure of the embedded system;
    /// returns (pass, lambda_min_energy, lambda_min_w).
    fn validate_ph(&self) -> PyResult<(bool, f64, f64)> {
        let ph = embed_second_order(self.gal.as_constant(), Provenance::Galerkin).map_err(err)?;
        let report = validate_ph(&ph, sgph::phform::default_validation_tol(ph.dim()));
        Ok((report.pass, report.lambda_min_energy, report.lambda_min_w))
    }

    /// Relative H2 errors of structure-preserving ROMs at the given
    /// reduced dimensions.
    fn h2_errors(&self, r_list: Vec<usize>) -> PyResult<Vec<f64>> {
        let ns = self.gal.ns();
        let b = self.gal.bhat().column(0).clone_owned();
        let r_needed = r_list.iter().cloned().max().unwrap_or(1).min(ns);
        let pb = soar(
            self.gal.khat(),
            self.gal.dhat(),
            self.gal.mhat(),
            &b,
            r_needed,
            1e-12,
        )
        .map_err(err)?;
        let pb = if pb.rank() < r_needed {
            complete_basis(&pb, ns)
        } else {
            pb
        };
        let fom = siso_restriction(self.gal.as_constant(), 0, 0).map_err(err)?;
        let fom_h2 = h2_norm(&fom).map_err(err)?;
        let mut out = Vec::new();
        for r in r_list {
            let rom = reduce(&self.gal, &pb, r.min(pb.rank())).map_err(err)?;
            let rs = siso_restriction(rom.as_constant(), 0, 0).map_err(err)?;
            out.push(h2_error_norm(&fom, &rs).map_err(err)? / fom_h2);
        }
        Ok(out)
    }

    /// Parameter box bounds as (lower, upper) lists.
    fn domain(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.sys.domain.lower().to_vec(),
            self.sys.domain.upper().to_vec(),
        )
    }
}

#[pymodule]
fn pysgph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(basis_size, m)?)?;
    m.add_function(wrap_pyfunction!(cubature_nodes, m)?)?;
    m.add_class::<MsdGalerkin>()?;
    Ok(())
}
