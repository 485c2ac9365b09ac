//! Loading, synthesising, resampling and persisting datasets and embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// Observations `n × d` (rows are points) with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    labels: Option<Vec<i64>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidData("need at least one feature column".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidData(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != values.nrows() {
                return Err(Error::InvalidData(format!(
                    "{} labels for {} rows",
                    l.len(),
                    values.nrows()
                )));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        Self::new(values, labels)
    }
}

/// Low-dimensional coordinates `n × q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    coords: DMatrix<f64>,
}

impl Embedding {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        if coords.ncols() < 1 {
            return Err(Error::InvalidData("embedding needs q >= 1".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("embedding has non-finite entries".into()));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DMatrix<f64> {
        self.coords
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn q(&self) -> usize {
        self.coords.ncols()
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Reads a comma-separated file. The first row is treated as a header iff
/// any of its cells fails to parse as a number.
///
/// `label_column` names a header column; when the file has no header it may
/// be given as a 0-based column index instead. Labels that are not all
/// integers are encoded as integers in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);

    let mut records: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        records.push(rec.iter().map(str::to_owned).collect());
    }
    if records.is_empty() {
        return Err(Error::InvalidData(format!("{}: empty file", path.display())));
    }

    let has_header = records[0].iter().any(|c| parse_cell(c).is_none());
    let header = if has_header {
        Some(records.remove(0))
    } else {
        None
    };
    let arity = header
        .as_ref()
        .map(Vec::len)
        .unwrap_or_else(|| records.first().map_or(0, Vec::len));

    let label_idx = match label_column {
        None => None,
        Some(name) => {
            let found = header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c.trim() == name))
                .or_else(|| {
                    if header.is_none() {
                        name.parse::<usize>().ok().filter(|&i| i < arity)
                    } else {
                        None
                    }
                });
            Some(found.ok_or_else(|| Error::MissingLabelColumn {
                path: path.to_path_buf(),
                name: name.to_owned(),
            })?)
        }
    };

    let n = records.len();
    let d = arity - usize::from(label_idx.is_some());
    let mut values = DMatrix::zeros(n, d);
    let mut raw_labels = Vec::with_capacity(if label_idx.is_some() { n } else { 0 });
    for (r, rec) in records.iter().enumerate() {
        if rec.len() != arity {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: r + 1,
                found: rec.len(),
                expected: arity,
            });
        }
        let mut c_out = 0;
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(cell.trim().to_owned());
                continue;
            }
            let v = parse_cell(cell).filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: r + 1,
                column: c + 1,
                message: format!("cannot parse {:?} as a finite number", cell),
            })?;
            values[(r, c_out)] = v;
            c_out += 1;
        }
    }

    let labels = label_idx.map(|_| encode_labels(&raw_labels));
    DataMatrix::new(values, labels)
}

fn encode_labels(raw: &[String]) -> Vec<i64> {
    let ints: Option<Vec<i64>> = raw.iter().map(|s| s.parse::<i64>().ok()).collect();
    if let Some(ints) = ints {
        return ints;
    }
    let mut codes: HashMap<&str, i64> = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = codes.len() as i64;
            *codes.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// Isotropic Gaussian clusters. Cluster centres are drawn from
/// `N(0, (10·spread)²)` per coordinate, points from `N(centre, spread²)`.
/// Labels are the cluster indices, rows are grouped by cluster.
pub fn synth_blobs(
    n_clusters: usize,
    per_cluster: usize,
    d: usize,
    spread: f64,
    seed: u64,
) -> Result<DataMatrix> {
    if n_clusters < 1 || per_cluster < 1 || d < 1 {
        return Err(Error::InvalidArgument(
            "n_clusters, per_cluster and d must all be >= 1".into(),
        ));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread must be > 0, got {spread}")));
    }
    let mut rng = rng::seeded(seed);
    let centres: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| {
            (0..d)
                .map(|_| 10.0 * spread * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect()
        })
        .collect();

    let n = n_clusters * per_cluster;
    let mut values = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for (c, centre) in centres.iter().enumerate() {
        for p in 0..per_cluster {
            let r = c * per_cluster + p;
            for (j, mu) in centre.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                values[(r, j)] = mu + spread * z;
            }
            labels.push(c as i64);
        }
    }
    DataMatrix::new(values, Some(labels))
}

/// Keeps the `n_groups` most frequent labels (ties go to the smaller label)
/// and subsamples without replacement so that at most `max_total` rows
/// remain. Per-group counts are proportional to group size, rounded by the
/// largest-remainder rule. Surviving rows keep their original order.
pub fn resample_groups(
    data: &DataMatrix,
    n_groups: usize,
    max_total: usize,
    seed: u64,
) -> Result<DataMatrix> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidArgument("resampling requires labels".into()))?;
    if n_groups < 1 {
        return Err(Error::InvalidArgument("n_groups must be >= 1".into()));
    }

    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < n_groups {
        return Err(Error::InvalidArgument(format!(
            "{} distinct labels, cannot keep {n_groups} groups",
            members.len()
        )));
    }

    let mut groups: Vec<(i64, Vec<usize>)> = members.into_iter().collect();
    // BTreeMap order is ascending label, so a stable sort keeps smaller labels first on ties
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()));
    groups.truncate(n_groups);

    let total: usize = groups.iter().map(|g| g.1.len()).sum();
    let counts = if total <= max_total {
        groups.iter().map(|g| g.1.len()).collect::<Vec<_>>()
    } else {
        largest_remainder(&groups, total, max_total)
    };

    let mut rng = rng::seeded(seed);
    let mut keep = Vec::with_capacity(counts.iter().sum());
    for ((_, rows), &count) in groups.iter().zip(&counts) {
        if count == rows.len() {
            keep.extend_from_slice(rows);
        } else {
            keep.extend(index::sample(&mut rng, rows.len(), count).into_iter().map(|i| rows[i]));
        }
    }
    keep.sort_unstable();
    data.select_rows(&keep)
}

fn largest_remainder(groups: &[(i64, Vec<usize>)], total: usize, max_total: usize) -> Vec<usize> {
    let mut counts = Vec::with_capacity(groups.len());
    let mut remainders = Vec::with_capacity(groups.len());
    for (g, (label, rows)) in groups.iter().enumerate() {
        let exact = rows.len() as u128 * max_total as u128;
        counts.push((exact / total as u128) as usize);
        remainders.push((exact % total as u128, *label, g));
    }
    let short = max_total - counts.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, _, g) in remainders.iter().take(short) {
        counts[g] += 1;
    }
    counts
}

/// Writes `id,x1,...,xq[,label]` with shortest round-trip float formatting.
pub fn save_embedding(emb: &Embedding, labels: Option<&[i64]>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        if l.len() != emb.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} embedded points",
                l.len(),
                emb.n()
            )));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "id")?;
        for j in 1..=emb.q() {
            write!(out, ",x{j}")?;
        }
        if labels.is_some() {
            write!(out, ",label")?;
        }
        writeln!(out)?;
        for i in 0..emb.n() {
            write!(out, "{i}")?;
            for j in 0..emb.q() {
                write!(out, ",{}", emb.coords()[(i, j)])?;
            }
            if let Some(l) = labels {
                write!(out, ",{}", l[i])?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Reads a file produced by [`save_embedding`].
pub fn load_embedding(path: impl AsRef<Path>) -> Result<(Embedding, Option<Vec<i64>>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::InvalidData(format!("{}: empty embedding file", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.first() != Some(&"id") {
        return Err(Error::InvalidData(format!(
            "{}: embedding header must start with \"id\"",
            path.display()
        )));
    }
    let has_label = header.last() == Some(&"label");
    let q = header.len() - 1 - usize::from(has_label);
    if q == 0 {
        return Err(Error::InvalidData(format!("{}: no coordinate columns", path.display())));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: r + 1,
                found: cells.len(),
                expected: header.len(),
            });
        }
        let parse_err = |c: usize| Error::Parse {
            path: path.to_path_buf(),
            row: r + 1,
            column: c + 1,
            message: format!("cannot parse {:?}", cells[c]),
        };
        for c in 1..=q {
            rows.push(cells[c].trim().parse::<f64>().map_err(|_| parse_err(c))?);
        }
        if has_label {
            labels.push(cells[q + 1].trim().parse::<i64>().map_err(|_| parse_err(q + 1))?);
        }
    }
    let n = rows.len() / q;
    let coords = DMatrix::from_row_slice(n, q, &rows);
    Ok((Embedding::new(coords)?, has_label.then_some(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_plain_and_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "a,b\n0,1\n1,0\n2,2\n");
        let m = load_csv(&p, None).unwrap();
        assert_eq!(m.values(), &DMatrix::from_row_slice(3, 2, &[0., 1., 1., 0., 2., 2.]));
        assert!(m.labels().is_none());

        let m = load_csv(&p, Some("b")).unwrap();
        assert_eq!(m.values(), &DMatrix::from_row_slice(3, 1, &[0., 1., 2.]));
        assert_eq!(m.labels(), Some(&[1, 0, 2][..]));
    }

    #[test]
    fn headerless_file_and_index_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "0,1,7\n1,0,8\n");
        let m = load_csv(&p, Some("2")).unwrap();
        assert_eq!(m.d(), 2);
        assert_eq!(m.labels(), Some(&[7, 8][..]));
    }

    #[test]
    fn string_labels_are_encoded() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "x,kind\n0,cat\n1,dog\n2,cat\n");
        let m = load_csv(&p, Some("kind")).unwrap();
        assert_eq!(m.labels(), Some(&[0, 1, 0][..]));
    }

    #[test]
    fn parse_error_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "a,b\n0,1\nx,0\n");
        let err = load_csv(&p, None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, column: 1, .. }), "{err}");
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn ragged_and_missing_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "a,b\n0,1\n1\n");
        assert!(matches!(load_csv(&p, None), Err(Error::RaggedRow { row: 2, .. })));
        let p = write_tmp(&dir, "b.csv", "a,b\n0,1\n1,2\n");
        assert!(matches!(load_csv(&p, Some("c")), Err(Error::MissingLabelColumn { .. })));
        assert!(matches!(
            load_csv(dir.path().join("nope.csv"), None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn blobs_shape_and_determinism() {
        let a = synth_blobs(3, 100, 5, 1.0, 7).unwrap();
        assert_eq!((a.n(), a.d()), (300, 5));
        let labels = a.labels().unwrap();
        for c in 0..3 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 100);
        }
        let b = synth_blobs(3, 100, 5, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);

        let tiny = synth_blobs(1, 2, 1, 1.0, 0).unwrap();
        assert_eq!((tiny.n(), tiny.d()), (2, 1));
        assert_eq!(tiny.labels(), Some(&[0, 0][..]));
        assert!(synth_blobs(1, 2, 1, 0.0, 0).is_err());
    }

    fn labelled(sizes: &[(i64, usize)]) -> DataMatrix {
        let n: usize = sizes.iter().map(|s| s.1).sum();
        let values = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let labels = sizes
            .iter()
            .flat_map(|&(l, c)| std::iter::repeat_n(l, c))
            .collect();
        DataMatrix::new(values, Some(labels)).unwrap()
    }

    #[test]
    fn resample_twelve_labels_to_ten() {
        let sizes: Vec<(i64, usize)> = (0..12).map(|l| (l, 50 + 7 * l as usize)).collect();
        let data = labelled(&sizes);
        let out = resample_groups(&data, 10, 40_000, 3).unwrap();
        let mut distinct: Vec<i64> = out.labels().unwrap().to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct, (2..12).collect::<Vec<_>>());
        assert!(out.n() <= 40_000);
    }

    #[test]
    fn resample_noop_and_error() {
        let data = labelled(&[(0, 5), (1, 5), (2, 5)]);
        let out = resample_groups(&data, 3, 15, 0).unwrap();
        assert_eq!(out, data);
        let two = labelled(&[(0, 5), (1, 5)]);
        assert!(resample_groups(&two, 3, 100, 0).is_err());
    }

    #[test]
    fn resample_proportional_allocation() {
        // sizes 60/30/10 into 10 rows → 6/3/1
        let data = labelled(&[(4, 60), (5, 30), (6, 10)]);
        let out = resample_groups(&data, 3, 10, 11).unwrap();
        let l = out.labels().unwrap();
        let count = |x| l.iter().filter(|&&v| v == x).count();
        assert_eq!((count(4), count(5), count(6)), (6, 3, 1));
        // remainders 2/3 each for 1-1-1 split of 2 → smaller labels win
        let data = labelled(&[(9, 3), (1, 3), (5, 3)]);
        let out = resample_groups(&data, 3, 2, 0).unwrap();
        let l = out.labels().unwrap();
        assert_eq!(l.iter().filter(|&&v| v == 9).count(), 0);
        let again = resample_groups(&data, 3, 2, 0).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn ties_keep_smaller_labels() {
        let data = labelled(&[(3, 4), (1, 4), (2, 4), (0, 9)]);
        let out = resample_groups(&data, 2, 100, 0).unwrap();
        let mut distinct = out.labels().unwrap().to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct, vec![0, 1]);
    }

    #[test]
    fn save_format_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let e = Embedding::new(DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.])).unwrap();
        save_embedding(&e, None, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "id,x1,x2\n0,0,1\n1,1,0\n");

        let coords = DMatrix::from_row_slice(3, 2, &[0.1, -1e-300, 1.0 / 3.0, 2e20, f64::MIN_POSITIVE, -7.25]);
        let e = Embedding::new(coords).unwrap();
        save_embedding(&e, Some(&[2, 0, 1]), &p).unwrap();
        let (back, labels) = load_embedding(&p).unwrap();
        assert_eq!(back, e);
        assert_eq!(labels, Some(vec![2, 0, 1]));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = Embedding::new(DMatrix::zeros(2, 1)).unwrap();
        let p = dir.path().join("missing").join("e.csv");
        assert!(matches!(save_embedding(&e, None, p), Err(Error::Io { .. })));
    }
}
