//! Deterministic output writers: legacy-VTK ASCII snapshots and CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use porochem::error::{Error, Result};
use porochem::mesh::Mesh;
use porochem::scenarios::VariationSeries;
use porochem::solver::State;
use porochem::verification::{ErrorTable, FieldErrors, TimeErrors};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Render a state snapshot as a legacy-VTK ASCII unstructured grid:
/// vertex coordinates, triangle connectivity (cell type 5), point data with
/// the scalar fields p, psi, w1, w2 and the displacement as a 3-component
/// vector with zero z. Bubble coefficients are omitted (vertex values only).
pub fn vtk_string(mesh: &Mesh, state: &State) -> String {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "porochem snapshot t={}", state.t);
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} 0", v[0], v[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    for (name, data) in [
        ("p", &state.p),
        ("psi", &state.psi),
        ("w1", &state.w1),
        ("w2", &state.w2),
    ] {
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for v in 0..nv {
            let _ = writeln!(s, "{}", data[v]);
        }
    }
    s.push_str("VECTORS u double\n");
    for v in 0..nv {
        let _ = writeln!(s, "{} {} 0", state.u[2 * v], state.u[2 * v + 1]);
    }
    s
}

pub fn write_vtk(mesh: &Mesh, state: &State, path: &Path) -> Result<()> {
    write_file(path, &vtk_string(mesh, state))
}

/// Anything renderable as a numeric CSV table.
pub trait CsvTable {
    fn headers(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<f64>>;
}

impl CsvTable for ErrorTable<FieldErrors> {
    fn headers(&self) -> Vec<String> {
        ["h", "u_l2", "u_h1", "p_l2", "p_h1", "psi_l2", "w1_l2", "w1_h1", "w2_l2", "w2_h1"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.param
            .iter()
            .zip(&self.rows)
            .map(|(&h, e)| {
                vec![
                    h, e.u_l2, e.u_h1, e.p_l2, e.p_h1, e.psi_l2, e.w1_l2, e.w1_h1, e.w2_l2,
                    e.w2_h1,
                ]
            })
            .collect()
    }
}

impl CsvTable for ErrorTable<TimeErrors> {
    fn headers(&self) -> Vec<String> {
        ["dt", "u", "p", "psi", "w1", "w2"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.param
            .iter()
            .zip(&self.rows)
            .map(|(&dt, e)| vec![dt, e.u, e.p, e.psi, e.w1, e.w2])
            .collect()
    }
}

impl CsvTable for VariationSeries {
    fn headers(&self) -> Vec<String> {
        vec!["t".into(), "v".into()]
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| vec![t, v])
            .collect()
    }
}

pub fn csv_string(table: &dyn CsvTable) -> String {
    let mut s = table.headers().join(",");
    s.push('\n');
    for row in table.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn write_csv_table(table: &dyn CsvTable, path: &Path) -> Result<()> {
    write_file(path, &csv_string(table))
}
