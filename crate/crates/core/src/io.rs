//! Field serialization: legacy-ASCII VTK structured points and CSV.
//!
//! Cell-centered data is written as POINT_DATA on the lattice of cell
//! centers (origin shifted half a cell). Staggered vectors are averaged to
//! cell centers for export. Values carry 17 significant digits.

use crate::grid::{GridDomain, ScalarField, SymTensorField, VectorField};
use std::io::{self, Write};
use std::path::Path;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn vtk_header(w: &mut impl Write, dom: &GridDomain, title: &str) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dom.n[0], dom.n[1], dom.n[2])?;
    writeln!(
        w,
        "ORIGIN {} {} {}",
        fmt(dom.lo[0] + 0.5 * dom.h),
        fmt(if dom.dim > 1 { dom.lo[1] + 0.5 * dom.h } else { 0.0 }),
        fmt(if dom.dim > 2 { dom.lo[2] + 0.5 * dom.h } else { 0.0 })
    )?;
    writeln!(w, "SPACING {} {} {}", fmt(dom.h), fmt(dom.h), fmt(dom.h))?;
    writeln!(w, "POINT_DATA {}", dom.cell_count())?;
    Ok(())
}

pub fn write_vtk_scalar(path: &Path, name: &str, field: &ScalarField) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    let dom = &field.domain;
    vtk_header(&mut w, dom, name)?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &field.values {
        writeln!(w, "{}", fmt(*v))?;
    }
    Ok(())
}

/// Staggered components averaged to cell centers; zero-padded to 3 vector
/// components as VTK requires.
pub fn write_vtk_vector(path: &Path, name: &str, field: &VectorField) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    let dom = &field.domain;
    vtk_header(&mut w, dom, name)?;
    writeln!(w, "VECTORS {name} double")?;
    for idx in 0..dom.cell_count() {
        let c = dom.cell_coords(idx);
        let mut comps = [0.0f64; 3];
        for (a, comp) in comps.iter_mut().enumerate().take(dom.dim) {
            let lo = dom.face_index(a, c);
            let mut up = c;
            up[a] += 1;
            let hi = dom.face_index(a, up);
            *comp = 0.5 * (field.comps[a][lo] + field.comps[a][hi]);
        }
        writeln!(w, "{} {} {}", fmt(comps[0]), fmt(comps[1]), fmt(comps[2]))?;
    }
    Ok(())
}

/// Each independent component as its own scalar array (g_00, g_01, ...).
pub fn write_vtk_sym_tensor(path: &Path, name: &str, field: &SymTensorField) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    let dom = &field.domain;
    vtk_header(&mut w, dom, name)?;
    for i in 0..field.dim {
        for j in i..field.dim {
            writeln!(w, "SCALARS {name}_{i}{j} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for idx in 0..dom.cell_count() {
                writeln!(w, "{}", fmt(field.get(idx, i, j)))?;
            }
        }
    }
    Ok(())
}

pub fn write_csv_scalar(path: &Path, name: &str, field: &ScalarField) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    let dom = &field.domain;
    writeln!(w, "i,j,k,x,y,z,{name}")?;
    for idx in 0..dom.cell_count() {
        let c = dom.cell_coords(idx);
        let p = dom.cell_center(idx);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c[0],
            c[1],
            c[2],
            fmt(p[0]),
            fmt(p[1]),
            fmt(p[2]),
            fmt(field.values[idx])
        )?;
    }
    Ok(())
}

pub fn write_csv_vector(path: &Path, name: &str, field: &VectorField) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    let dom = &field.domain;
    writeln!(w, "i,j,k,x,y,z,{name}_x,{name}_y,{name}_z")?;
    for idx in 0..dom.cell_count() {
        let c = dom.cell_coords(idx);
        let p = dom.cell_center(idx);
        let mut comps = [0.0f64; 3];
        for (a, comp) in comps.iter_mut().enumerate().take(dom.dim) {
            let lo = dom.face_index(a, c);
            let mut up = c;
            up[a] += 1;
            *comp = 0.5 * (field.comps[a][lo] + field.comps[a][dom.face_index(a, up)]);
        }
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            c[0],
            c[1],
            c[2],
            fmt(p[0]),
            fmt(p[1]),
            fmt(p[2]),
            fmt(comps[0]),
            fmt(comps[1]),
            fmt(comps[2])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, RegionSpec};

    #[test]
    fn vtk_scalar_layout() {
        let dom = build_domain(
            RegionSpec::Box,
            0.5,
            [0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            2,
        )
        .unwrap();
        let f = ScalarField::from_fn(&dom, |p| p[0] + 10.0 * p[1]);
        let tmp = std::env::temp_dir().join("fieldglue_io_test.vtk");
        write_vtk_scalar(&tmp, "u", &f).unwrap();
        let text = std::fs::read_to_string(&tmp).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DIMENSIONS 2 2 1"));
        assert!(text.contains("SCALARS u double 1"));
        // 17 significant digits.
        assert!(text.contains("2.5000000000000000e-1"));
        std::fs::remove_file(&tmp).ok();
    }
}
