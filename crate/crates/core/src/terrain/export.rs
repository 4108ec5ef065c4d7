use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::TerrainField;
use crate::error::{Error, Result};

/// Writes `x,y,z` rows for every grid node.
pub fn write_field_csv(field: &TerrainField, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "z"])?;
    for j in 0..field.rows() {
        for i in 0..field.cols() {
            let p = field.node_position(i, j);
            w.serialize((p.x, p.y, field.node(i, j)))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Binary (P5) grayscale heatmap of a node lattice, values mapped linearly
/// from `[lo, hi]` to `0..=255`. Rows are written top (max y) first.
pub fn write_pgm(
    values: &[f64],
    cols: usize,
    rows: usize,
    lo: f64,
    hi: f64,
    path: &Path,
) -> Result<()> {
    if values.len() != cols * rows {
        return Err(Error::Usage(format!(
            "heatmap has {} values for a {cols}x{rows} grid",
            values.len()
        )));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut bytes = Vec::with_capacity(values.len());
    for j in (0..rows).rev() {
        for i in 0..cols {
            let v = values[j * cols + i];
            let t = if v.is_finite() {
                ((v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            bytes.push((t * 255.0).round() as u8);
        }
    }
    write!(w, "P5\n{cols} {rows}\n255\n")
        .and_then(|_| w.write_all(&bytes))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::Bounds;

    #[test]
    fn pgm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pgm");
        // Bottom row 0, top row 0.5.
        write_pgm(&[0.0, 0.0, 0.5, 0.5], 2, 2, 0.0, 0.5, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[255, 255, 0, 0]);
    }

    #[test]
    fn csv_has_every_node() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let f =
            TerrainField::from_values(Bounds::new(0.0, 0.0, 1.0, 1.0), 2, 3, vec![0.1; 6]).unwrap();
        write_field_csv(&f, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("x,y,z"));
    }
}
