//! CSV files for layouts (`node,x,y`), partitions (`node,label`) and KL traces
//! (`iter,kl`). Coordinates use the shortest decimal that round-trips.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodePartition};
use crate::sne::Layout;

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn write_rows<W: Write, const N: usize>(w: W, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_error)?;
    for r in rows {
        out.write_record(&r).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

fn check_len(names: &[String], n: usize) -> Result<()> {
    if names.len() != n {
        return Err(Error::arg(format!("{} node names for {n} rows", names.len())));
    }
    Ok(())
}

pub fn write_layout<W: Write>(w: W, names: &[String], y: &Layout) -> Result<()> {
    check_len(names, y.len())?;
    let rows = names.iter().zip(y.points()).map(|(n, p)| [n.clone(), p[0].to_string(), p[1].to_string()]);
    write_rows(w, ["node", "x", "y"], rows)
}

pub fn write_partition<W: Write>(w: W, names: &[String], part: &NodePartition) -> Result<()> {
    check_len(names, part.len())?;
    let rows = names.iter().zip(part.labels()).map(|(n, l)| [n.clone(), l.to_string()]);
    write_rows(w, ["node", "label"], rows)
}

pub fn write_kl_trace<W: Write>(w: W, trace: &[f64]) -> Result<()> {
    write_rows(w, ["iter", "kl"], trace.iter().enumerate().map(|(i, kl)| [i.to_string(), kl.to_string()]))
}

/// Data records of a CSV whose header must equal `header`, each with its
/// line number.
fn read_rows<R: Read>(r: R, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let found = rdr.headers().map_err(csv_error)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            Ok((rec.position().map_or(0, |p| p.line() as usize), rec))
        })
        .collect()
}

pub fn read_layout<R: Read>(r: R) -> Result<(Vec<String>, Layout)> {
    let rows = read_rows(r, &["node", "x", "y"])?;
    let mut names = Vec::with_capacity(rows.len());
    let mut points = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let num = |s: &str| {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                message: format!("bad coordinate {s:?}"),
            })
        };
        points.push([num(&rec[1])?, num(&rec[2])?]);
        names.push(rec[0].to_string());
    }
    Ok((names, Layout::new(points)?))
}

/// Raw `(node, label)` pairs in file order.
pub fn read_partition<R: Read>(r: R) -> Result<Vec<(String, String)>> {
    Ok(read_rows(r, &["node", "label"])?
        .into_iter()
        .map(|(_, rec)| (rec[0].to_string(), rec[1].to_string()))
        .collect())
}

/// Reorders per-node rows keyed by node name into `g`'s node order. Every node
/// must appear exactly once.
pub fn align_to_graph<T: Clone>(g: &Graph, names: &[String], values: &[T]) -> Result<Vec<T>> {
    let n = g.node_count();
    if names.len() != n {
        return Err(Error::arg(format!("{} rows for a graph with {n} nodes", names.len())));
    }
    let index: HashMap<&str, usize> = g.labels().iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut slots: Vec<Option<T>> = vec![None; n];
    for (name, v) in names.iter().zip(values) {
        let id = *index
            .get(name.as_str())
            .ok_or_else(|| Error::arg(format!("node {name:?} is not in the graph")))?;
        if slots[id].replace(v.clone()).is_some() {
            return Err(Error::arg(format!("node {name:?} appears twice")));
        }
    }
    Ok(slots.into_iter().map(|s| s.unwrap()).collect())
}
