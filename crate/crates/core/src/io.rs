//! Versioned CSV tables.
//!
//! Every file starts with `# glwalk-schema: <kind> v<version>` followed by a
//! CSV header. Floats are written with Rust's shortest round-trip formatting,
//! so a written table parses back to identical bits.

use crate::error::{Error, Result};
use crate::estimators::KolmogorovReport;
use crate::walk::{Observable, SampleMatrix};

pub const SCHEMA_VERSION: u32 = 1;
const PREFIX: &str = "# glwalk-schema: ";

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub kind: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, header: &[&str]) -> Self {
        Table { kind: kind.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{} table has no column {name}", self.kind)))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        let body = String::from_utf8(body).map_err(|e| Error::Io(e.to_string()))?;
        Ok(format!("{PREFIX}{} v{SCHEMA_VERSION}\n{body}", self.kind))
    }

    /// Parses a table, requiring `kind` when given.
    pub fn parse(text: &str, kind: Option<&str>) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let tag = first.strip_prefix(PREFIX).ok_or_else(|| Error::Schema("missing schema header line".into()))?;
        let (found, version) = tag.trim().rsplit_once(" v").ok_or_else(|| Error::Schema(format!("malformed schema tag {tag:?}")))?;
        if version != SCHEMA_VERSION.to_string() {
            return Err(Error::Schema(format!("unsupported schema version {version}")));
        }
        if let Some(k) = kind {
            if found != k {
                return Err(Error::Schema(format!("expected a {k} table, found {found}")));
            }
        }
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header.is_empty() || header.iter().all(|h| h.is_empty()) {
            return Err(Error::Schema(format!("{found} table has no header")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
        Ok(Table { kind: found.into(), header, rows })
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        self.rows.iter().map(|r| parse_f64(&r[i])).collect()
    }

    pub fn u64_column(&self, name: &str) -> Result<Vec<u64>> {
        let i = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| r[i].parse().map_err(|_| Error::Schema(format!("bad integer {:?} in column {name}", r[i]))))
            .collect()
    }

    pub fn str_column(&self, name: &str) -> Result<Vec<String>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i].clone()).collect())
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Schema(format!("bad number {s:?}")))
}

pub const SAMPLES_KIND: &str = "samples";
pub const BE_CURVE_KIND: &str = "be_curve";

/// One row per (path, n) with the three log-observables.
pub fn samples_table(s: &SampleMatrix) -> Table {
    let mut t = Table::new(SAMPLES_KIND, &["path_id", "n", "log_vec_norm", "log_mat_norm", "log_spec_radius"]);
    for p in 0..s.paths {
        for (j, &n) in s.n_grid.iter().enumerate() {
            let mut row = vec![p.to_string(), n.to_string()];
            row.extend(Observable::ALL.iter().map(|&o| fmt_f64(s.value(o, j, p))));
            t.push(row);
        }
    }
    t
}

pub fn samples_from_table(t: &Table) -> Result<SampleMatrix> {
    if t.kind != SAMPLES_KIND {
        return Err(Error::Schema(format!("expected a samples table, found {}", t.kind)));
    }
    let path = t.u64_column("path_id")?;
    let n = t.u64_column("n")?;
    if path.is_empty() {
        return Err(Error::Schema("samples table is empty".into()));
    }
    let n_grid: Vec<u64> = n.iter().zip(&path).take_while(|(_, &p)| p == path[0]).map(|(&v, _)| v).collect();
    let k = n_grid.len();
    if path.len() % k != 0 {
        return Err(Error::Schema("samples table is not a full path × n grid".into()));
    }
    let paths = path.len() / k;
    let cols: Vec<Vec<f64>> = Observable::ALL.iter().map(|o| t.f64_column(&format!("log_{}", o.name()))).collect::<Result<_>>()?;
    let mut values: [Vec<f64>; 3] = Default::default();
    for (o, col) in cols.iter().enumerate() {
        values[o] = vec![0.0; k * paths];
        for (r, v) in col.iter().enumerate() {
            let (p, j) = (r / k, r % k);
            if path[r] != p as u64 || n[r] != n_grid[j] {
                return Err(Error::Schema(format!("samples row {r} is out of order")));
            }
            values[o][j * paths + p] = *v;
        }
    }
    SampleMatrix::from_columns(n_grid, paths, values)
}

pub fn kolmogorov_table(r: &KolmogorovReport) -> Table {
    let mut t = Table::new(BE_CURVE_KIND, &["observable", "n", "D_n", "se", "mc_floor", "paths", "lambda_hat", "s_hat", "seed"]);
    for (i, &n) in r.n_grid.iter().enumerate() {
        t.push(vec![
            r.observable.clone(),
            n.to_string(),
            fmt_f64(r.d_n[i]),
            fmt_f64(r.se[i]),
            fmt_f64(r.mc_floor),
            r.paths.to_string(),
            fmt_f64(r.lambda_hat),
            fmt_f64(r.s_hat),
            r.seed.to_string(),
        ]);
    }
    t
}

/// Reports of a be_curve table, one per observable in order of appearance.
pub fn kolmogorov_from_table(t: &Table) -> Result<Vec<KolmogorovReport>> {
    if t.kind != BE_CURVE_KIND {
        return Err(Error::Schema(format!("expected a be_curve table, found {}", t.kind)));
    }
    if t.rows.is_empty() {
        return Err(Error::Schema("be_curve table is empty".into()));
    }
    let obs = t.str_column("observable")?;
    let n = t.u64_column("n")?;
    let d = t.f64_column("D_n")?;
    let se = t.f64_column("se")?;
    let floor = t.f64_column("mc_floor")?;
    let paths = t.u64_column("paths")?;
    let lam = t.f64_column("lambda_hat")?;
    let s = t.f64_column("s_hat")?;
    let seed = t.u64_column("seed")?;
    let mut out: Vec<KolmogorovReport> = Vec::new();
    for i in 0..t.rows.len() {
        match out.iter_mut().find(|r| r.observable == obs[i]) {
            Some(r) => {
                r.n_grid.push(n[i]);
                r.d_n.push(d[i]);
                r.se.push(se[i]);
            }
            None => out.push(KolmogorovReport {
                observable: obs[i].clone(),
                n_grid: vec![n[i]],
                d_n: vec![d[i]],
                se: vec![se[i]],
                paths: paths[i] as usize,
                mc_floor: floor[i],
                lambda_hat: lam[i],
                s_hat: s[i],
                seed: seed[i],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_kind_checks() {
        let mut t = Table::new("gap", &["n", "max_gap"]);
        t.push(vec!["1".into(), fmt_f64(0.25)]);
        let text = t.to_csv().unwrap();
        assert!(text.starts_with("# glwalk-schema: gap v1\nn,max_gap\n1,0.25\n"));
        assert_eq!(Table::parse(&text, Some("gap")).unwrap(), t);
        assert!(matches!(Table::parse(&text, Some("be_curve")), Err(Error::Schema(_))));
        assert!(matches!(Table::parse("", None), Err(Error::Schema(_))));
        assert!(matches!(Table::parse("n,x\n1,2\n", None), Err(Error::Schema(_))));
        assert!(matches!(Table::parse("# glwalk-schema: gap v9\nn\n", None), Err(Error::Schema(_))));
    }

    #[test]
    fn empty_be_curve_is_a_schema_error() {
        let t = Table::new(BE_CURVE_KIND, &["observable", "n", "D_n", "se", "mc_floor", "paths", "lambda_hat", "s_hat", "seed"]);
        let back = Table::parse(&t.to_csv().unwrap(), Some(BE_CURVE_KIND)).unwrap();
        assert!(matches!(kolmogorov_from_table(&back), Err(Error::Schema(_))));
    }

    #[test]
    fn samples_round_trip() {
        let grid = vec![2, 8];
        let paths = 3;
        let v: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 + 1e-17).collect();
        let s = SampleMatrix::from_columns(grid, paths, [v.clone(), v.iter().map(|x| x * 3.0).collect(), v.iter().map(|x| -x).collect()]).unwrap();
        let text = samples_table(&s).to_csv().unwrap();
        let back = samples_from_table(&Table::parse(&text, Some(SAMPLES_KIND)).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn kolmogorov_round_trip() {
        let r = KolmogorovReport {
            observable: "mat_norm".into(),
            n_grid: vec![256, 1024],
            d_n: vec![0.031, 1.0 / 3.0],
            se: vec![1e-3, 2e-3],
            paths: 1000,
            mc_floor: 0.043,
            lambda_hat: 0.0857,
            s_hat: 0.35,
            seed: u64::MAX,
        };
        let text = kolmogorov_table(&r).to_csv().unwrap();
        let back = kolmogorov_from_table(&Table::parse(&text, None).unwrap()).unwrap();
        assert_eq!(back, vec![r]);
    }

    proptest! {
        #[test]
        fn floats_round_trip_bitwise(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            let back = parse_f64(&fmt_f64(v)).unwrap();
            if v.is_nan() {
                prop_assert!(back.is_nan());
            } else {
                prop_assert_eq!(back.to_bits(), v.to_bits());
            }
        }
    }
}
