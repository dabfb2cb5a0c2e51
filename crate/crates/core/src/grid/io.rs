//! Field snapshot files and CSV export.
//!
//! Snapshot layout: one ASCII header line
//! `QTF1 dims=<n1>x<n2>[x<n3>] h=<h> fields=<name>,<name>,...` terminated by
//! `\n`, followed by one block of little-endian `f64` values per declared field,
//! each block in row-major cell order (last axis fastest).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Grid, GridError, TensorField};

pub const MAGIC: &str = "QTF1";

/// Names of the nine order-parameter components as written to snapshots.
pub const Q_COMPONENTS: [&str; 9] = [
    "Q11", "Q12", "Q13", "Q21", "Q22", "Q23", "Q31", "Q32", "Q33",
];

/// A decoded snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dims: Vec<usize>,
    pub h: f64,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl Snapshot {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Rebuilds the order parameter on `grid`, which must match the header.
    pub fn tensor_field(&self, grid: Grid) -> Result<TensorField, GridError> {
        let nd = grid.ndim();
        if self.dims.as_slice() != &grid.dims()[..nd] || self.h != grid.h() {
            return Err(GridError::Mismatch);
        }
        let mut q = TensorField::zeros(grid);
        for (k, name) in Q_COMPONENTS.iter().enumerate() {
            let data = self
                .field(name)
                .ok_or_else(|| GridError::Format(format!("missing field {name}")))?;
            q.comps[k].copy_from_slice(data);
        }
        Ok(q)
    }
}

fn dims_string(grid: &Grid) -> String {
    grid.dims()[..grid.ndim()]
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// Encodes named cell fields into the snapshot byte format.
pub fn encode_snapshot(grid: &Grid, fields: &[(&str, &[f64])]) -> Result<Vec<u8>, GridError> {
    let names: Vec<&str> = fields.iter().map(|(n, _)| *n).collect();
    if names
        .iter()
        .any(|n| n.is_empty() || n.contains([',', ' ', '\n']))
    {
        return Err(GridError::Format(
            "field names must be non-empty without spaces or commas".into(),
        ));
    }
    let mut out = format!(
        "{MAGIC} dims={} h={} fields={}\n",
        dims_string(grid),
        grid.h(),
        names.join(",")
    )
    .into_bytes();
    for (name, data) in fields {
        if data.len() != grid.num_cells() {
            return Err(GridError::Format(format!(
                "field {name} has {} values, grid has {}",
                data.len(),
                grid.num_cells()
            )));
        }
        for v in data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_snapshot(
    path: &Path,
    grid: &Grid,
    fields: &[(&str, &[f64])],
) -> Result<(), GridError> {
    let bytes = encode_snapshot(grid, fields)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Writes the nine `Q` components.
pub fn write_tensor_snapshot(path: &Path, q: &TensorField) -> Result<(), GridError> {
    let fields: Vec<(&str, &[f64])> = Q_COMPONENTS
        .iter()
        .zip(&q.comps)
        .map(|(n, c)| (*n, c.as_slice()))
        .collect();
    write_snapshot(path, &q.grid, &fields)
}

pub fn decode_snapshot(mut reader: impl BufRead) -> Result<Snapshot, GridError> {
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let header = header
        .strip_suffix('\n')
        .ok_or_else(|| GridError::Format("missing header line".into()))?;
    let mut tokens = header.split(' ');
    if tokens.next() != Some(MAGIC) {
        return Err(GridError::Format("bad magic".into()));
    }
    let mut dims = None;
    let mut h = None;
    let mut names = None;
    for tok in tokens {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| GridError::Format(format!("bad token {tok:?}")))?;
        match key {
            "dims" => {
                let d: Result<Vec<usize>, _> = val.split('x').map(str::parse).collect();
                dims = Some(d.map_err(|_| GridError::Format(format!("bad dims {val:?}")))?);
            }
            "h" => {
                h = Some(
                    val.parse::<f64>()
                        .map_err(|_| GridError::Format(format!("bad h {val:?}")))?,
                )
            }
            "fields" => names = Some(val.split(',').map(str::to_owned).collect::<Vec<_>>()),
            _ => return Err(GridError::Format(format!("unknown header key {key:?}"))),
        }
    }
    let (Some(dims), Some(h), Some(names)) = (dims, h, names) else {
        return Err(GridError::Format(
            "header must declare dims, h and fields".into(),
        ));
    };
    let n: usize = dims.iter().product();
    let mut fields = Vec::with_capacity(names.len());
    let mut buf = vec![0u8; 8 * n];
    for name in names {
        reader
            .read_exact(&mut buf)
            .map_err(|_| GridError::Format(format!("truncated block {name}")))?;
        let data = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        fields.push((name, data));
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(GridError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(Snapshot { dims, h, fields })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, GridError> {
    decode_snapshot(BufReader::new(std::fs::File::open(path)?))
}

/// CSV with one row per cell: `i,j[,k],x,y[,z],<field columns>`.
pub fn encode_csv(grid: &Grid, fields: &[(&str, &[f64])]) -> String {
    let nd = grid.ndim();
    let idx = ["i", "j", "k"];
    let pos = ["x", "y", "z"];
    let mut header: Vec<&str> = idx[..nd].to_vec();
    header.extend_from_slice(&pos[..nd]);
    header.extend(fields.iter().map(|(n, _)| *n));
    let mut out = header.join(",");
    out.push('\n');
    let cells = grid.cells();
    for c in 0..cells.len() {
        let co = cells.coords(c);
        let x = grid.cell_center(co);
        let mut row: Vec<String> = co[..nd].iter().map(|v| v.to_string()).collect();
        row.extend(x[..nd].iter().map(|v| v.to_string()));
        for (_, data) in fields {
            row.push(data[c].to_string());
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
