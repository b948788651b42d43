//! Sobol' points from Joe–Kuo direction numbers.

use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::PointSet;

/// Tables with fewer dimensions cannot reproduce the comparison tables.
pub const MIN_TABLE_DIMS: usize = 100;
pub const MAX_SOBOL_M: u32 = 31;

/// One row of a direction-number file: the primitive polynomial of degree
/// `degree` with interior coefficients `poly_code`, and the initial
/// direction integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionEntry {
    pub degree: u32,
    pub poly_code: u64,
    pub initial: Vec<u64>,
}

/// Direction numbers for dimensions `2..=dims()`; dimension 1 is the
/// van der Corput sequence and has no row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionTable {
    entries: Vec<DirectionEntry>,
}

impl DirectionTable {
    /// Parses the Joe–Kuo text format: a header line, then `d s a m_1 .. m_s` per line.
    pub fn parse(text: &str, source_name: &str) -> Result<DirectionTable> {
        let err = |line: usize, msg: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            msg,
        };
        let mut entries = Vec::new();
        let mut last_line = 0;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            last_line = lineno;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let fields = line
                .split_whitespace()
                .map(|f| f.parse::<u64>().map_err(|e| err(lineno, format!("'{f}': {e}"))))
                .collect::<Result<Vec<u64>>>()?;
            if fields.len() < 4 {
                return Err(err(
                    lineno,
                    format!("expected 'd s a m_1 ..', got {} fields", fields.len()),
                ));
            }
            let (d, s, a) = (fields[0], fields[1], fields[2]);
            let expected = entries.len() as u64 + 2;
            if d != expected {
                return Err(err(
                    lineno,
                    format!("dimension {d} out of sequence, expected {expected}"),
                ));
            }
            if s == 0 || s > 31 {
                return Err(err(lineno, format!("degree {s} outside 1..=31")));
            }
            if fields.len() != 3 + s as usize {
                return Err(err(
                    lineno,
                    format!("degree {s} needs {s} direction integers, found {}", fields.len() - 3),
                ));
            }
            if a >> (s - 1) != 0 {
                return Err(err(lineno, format!("polynomial code {a} too wide for degree {s}")));
            }
            let initial = fields[3..].to_vec();
            for (k, &mk) in initial.iter().enumerate() {
                if mk % 2 == 0 || mk >> (k + 1) != 0 {
                    return Err(err(
                        lineno,
                        format!("m_{} = {mk} must be odd and below 2^{}", k + 1, k + 1),
                    ));
                }
            }
            entries.push(DirectionEntry {
                degree: s as u32,
                poly_code: a,
                initial,
            });
        }
        let table = DirectionTable { entries };
        if table.dims() < MIN_TABLE_DIMS {
            return Err(err(
                last_line,
                format!(
                    "table covers {} dimensions, at least {MIN_TABLE_DIMS} needed",
                    table.dims()
                ),
            ));
        }
        Ok(table)
    }

    pub fn dims(&self) -> usize {
        self.entries.len() + 1
    }

    /// Row for dimension `j >= 2`.
    pub fn entry(&self, j: usize) -> Option<&DirectionEntry> {
        j.checked_sub(2).and_then(|i| self.entries.get(i))
    }

    /// Direction numbers `v_1..v_bits` of dimension `j`, as `bits`-digit integers.
    fn directions(&self, j: usize, bits: u32) -> Vec<u64> {
        let b = bits as usize;
        let mut v = vec![0u64; b];
        match self.entry(j) {
            None => {
                for (k, vk) in v.iter_mut().enumerate() {
                    *vk = 1 << (b - 1 - k);
                }
            }
            Some(e) => {
                let s = e.degree as usize;
                for k in 0..b {
                    v[k] = if k < s {
                        e.initial[k] << (b - 1 - k)
                    } else {
                        let mut x = v[k - s] ^ (v[k - s] >> s);
                        for i in 1..s {
                            if e.poly_code >> (s - 1 - i) & 1 == 1 {
                                x ^= v[k - i];
                            }
                        }
                        x
                    };
                }
            }
        }
        v
    }
}

pub fn load_direction_table(path: &Path) -> Result<DirectionTable> {
    let text = std::fs::read_to_string(path)?;
    DirectionTable::parse(&text, &path.display().to_string())
}

fn check_range(dt: &DirectionTable, m: u32, s: usize) -> Result<()> {
    if m > MAX_SOBOL_M {
        return Err(Error::DegreeOutOfRange(format!("m = {m} above {MAX_SOBOL_M}")));
    }
    if s == 0 || s > dt.dims() {
        return Err(Error::invalid(format!("s = {s} outside 1..={}", dt.dims())));
    }
    Ok(())
}

/// The first `2^m` Sobol' points in natural order, `m` digits each.
pub fn sobol_points(dt: &DirectionTable, m: u32, s: usize) -> Result<PointSet> {
    check_range(dt, m, s)?;
    let n = 1usize << m;
    let dirs: Vec<Vec<u64>> = (1..=s).map(|j| dt.directions(j, m)).collect();
    let mut coords = vec![0u64; n * s];
    for (j, v) in dirs.iter().enumerate() {
        let mut col = vec![0u64; n];
        for i in 1..n {
            col[i] = col[i & (i - 1)] ^ v[i.trailing_zeros() as usize];
        }
        for (i, x) in col.into_iter().enumerate() {
            coords[i * s + j] = x;
        }
    }
    PointSet::new(s, m, coords)
}

/// The same points in Gray-code order.
pub fn sobol_points_gray(dt: &DirectionTable, m: u32, s: usize) -> Result<PointSet> {
    check_range(dt, m, s)?;
    let n = 1usize << m;
    let dirs: Vec<Vec<u64>> = (1..=s).map(|j| dt.directions(j, m)).collect();
    let mut coords = vec![0u64; n * s];
    let mut x = vec![0u64; s];
    for i in 1..n {
        let c = (i - 1).trailing_ones() as usize;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj ^= dirs[j][c];
            coords[i * s + j] = *xj;
        }
    }
    PointSet::new(s, m, coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::mean_square_criterion;
    use crate::weights::WeightScheme;

    fn fixture() -> DirectionTable {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/new-joe-kuo-6.128");
        load_direction_table(&path).unwrap()
    }

    #[test]
    fn loads_fixture() {
        let dt = fixture();
        assert!(dt.dims() >= 100);
        assert_eq!(
            dt.entry(2),
            Some(&DirectionEntry {
                degree: 1,
                poly_code: 0,
                initial: vec![1]
            })
        );
        assert_eq!(dt.entry(7).unwrap().initial, vec![1, 3, 5, 13]);
        assert_eq!(dt.entry(1), None);
    }

    #[test]
    fn first_coordinate_is_van_der_corput() {
        let ps = sobol_points(&fixture(), 3, 2).unwrap();
        assert_eq!(ps.column(0), vec![0, 4, 2, 6, 1, 5, 3, 7]);
        assert_eq!(ps.value(1, 0), 0.5);
        assert_eq!(ps.value(2, 0), 0.25);
        assert_eq!(ps.value(3, 0), 0.75);
        // in natural order point 2 uses the second direction number 3/4 alone
        assert_eq!(ps.value(2, 1), 0.75);
        assert_eq!(ps.value(3, 1), 0.25);
    }

    #[test]
    fn known_points() {
        // points 1..=4 of the Joe–Kuo generator in three dimensions
        let ps = sobol_points_gray(&fixture(), 10, 3).unwrap();
        let expect = [
            [0.5, 0.5, 0.5],
            [0.75, 0.25, 0.25],
            [0.25, 0.75, 0.75],
            [0.375, 0.375, 0.625],
        ];
        for (i, row) in expect.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(ps.value(i + 1, j), x, "point {} coordinate {j}", i + 1);
            }
        }
    }

    #[test]
    fn projections_are_permutations() {
        let dt = fixture();
        for m in 1..=12 {
            let ps = sobol_points(&dt, m, 100).unwrap();
            for j in 0..100 {
                let mut col = ps.column(j);
                col.sort_unstable();
                assert!(col.iter().enumerate().all(|(i, &a)| a == i as u64), "m={m} j={j}");
            }
        }
    }

    #[test]
    fn gray_order_is_a_reordering() {
        let dt = fixture();
        for m in 1..=10 {
            let mut a: Vec<Vec<u64>> = sobol_points(&dt, m, 20).unwrap().rows().map(<[u64]>::to_vec).collect();
            let mut b: Vec<Vec<u64>> = sobol_points_gray(&dt, m, 20)
                .unwrap()
                .rows()
                .map(<[u64]>::to_vec)
                .collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn one_dimensional_criterion() {
        let ps = sobol_points(&fixture(), 4, 1).unwrap();
        let b = mean_square_criterion(&ps, &WeightScheme::product(vec![1.0]).unwrap()).unwrap();
        assert_eq!(format!("{b:.2E}"), "6.51E-4");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let good = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/new-joe-kuo-6.128"))
            .unwrap();
        let mut lines: Vec<&str> = good.lines().collect();
        lines[3] = "4 2 1 1";
        match DirectionTable::parse(&lines.join("\n"), "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let mut lines: Vec<&str> = good.lines().collect();
        lines[2] = "3 2 1 1 2";
        match DirectionTable::parse(&lines.join("\n"), "t") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("odd"));
            }
            other => panic!("{other:?}"),
        }
        let short: String = good.lines().take(20).collect::<Vec<_>>().join("\n");
        match DirectionTable::parse(&short, "t") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 20);
                assert!(msg.contains("100"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn range_checks() {
        let dt = fixture();
        assert!(sobol_points(&dt, 32, 1).is_err());
        assert!(sobol_points(&dt, 4, 0).is_err());
        assert!(sobol_points(&dt, 4, dt.dims() + 1).is_err());
    }
}
