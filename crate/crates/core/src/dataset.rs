//! Rating data ingestion: MovieLens `u.data` and long `user,item,rating` CSV
//! files, with dense re-indexing and minimum-count filters.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rating_matrix::{Entry, RatingScale, SparseRatingMatrix};

/// Ratings with the original identifiers of every row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRatings {
    pub matrix: SparseRatingMatrix,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    /// Repeated (user, item) pairs; the last rating was kept.
    pub duplicates: usize,
}

impl LoadedRatings {
    /// Wraps a matrix with ids `1..=n` for rows and `1..=p` for columns.
    pub fn with_numbered_ids(matrix: SparseRatingMatrix) -> Self {
        let row_ids = (1..=matrix.rows()).map(|i| i.to_string()).collect();
        let col_ids = (1..=matrix.cols()).map(|j| j.to_string()).collect();
        Self {
            matrix,
            row_ids,
            col_ids,
            duplicates: 0,
        }
    }
}

/// Writes `user,item,rating` lines with the original ids, row by row.
pub fn write_long_csv<W: Write>(writer: W, data: &LoadedRatings) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user", "item", "rating"])?;
    let mut entries = data.matrix.entries().to_vec();
    entries.sort_unstable_by_key(|e| (e.row, e.col));
    for e in entries {
        w.write_record([data.row_ids[e.row].as_str(), data.col_ids[e.col].as_str(), &e.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    MovielensUdata,
    LongCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetDescriptor {
    pub path: String,
    pub format: DatasetFormat,
    /// Minimum observed ratings per column; 0 disables the filter.
    pub min_column_ratings: usize,
    /// Minimum observed ratings per row; 0 disables the filter.
    pub min_row_ratings: usize,
    pub delimiter: char,
    pub levels: u8,
    /// Second rating file in the same format; when set, only users present
    /// in both files are kept (before the rating filters).
    pub intersect_users: Option<String>,
}

impl Default for DatasetDescriptor {
    fn default() -> Self {
        Self {
            path: String::new(),
            format: DatasetFormat::MovielensUdata,
            min_column_ratings: 20,
            min_row_ratings: 0,
            delimiter: ',',
            levels: 5,
            intersect_users: None,
        }
    }
}

impl DatasetDescriptor {
    pub fn load(&self) -> Result<LoadedRatings> {
        let mut raw = self.read(&self.path)?;
        if let Some(other) = &self.intersect_users {
            let users: HashSet<String> = self.read(other)?.row_ids.into_iter().collect();
            raw = keep_users(&raw, &users)?;
        }
        filter_min_ratings(&raw, self.min_column_ratings, self.min_row_ratings)
    }

    fn read(&self, path: &str) -> Result<LoadedRatings> {
        match self.format {
            DatasetFormat::MovielensUdata => read_movielens(path),
            DatasetFormat::LongCsv => read_long_csv(path, self.delimiter, self.levels),
        }
    }
}

/// Collects triplets keyed by original ids, assigning dense indices.
struct Builder {
    rows: HashMap<String, usize>,
    cols: HashMap<String, usize>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    cells: HashMap<(usize, usize), u8>,
    duplicates: usize,
}

impl Builder {
    fn new() -> Self {
        Self {
            rows: HashMap::new(),
            cols: HashMap::new(),
            row_ids: Vec::new(),
            col_ids: Vec::new(),
            cells: HashMap::new(),
            duplicates: 0,
        }
    }

    fn intern(map: &mut HashMap<String, usize>, ids: &mut Vec<String>, id: &str) -> usize {
        if let Some(&k) = map.get(id) {
            return k;
        }
        ids.push(id.to_owned());
        map.insert(id.to_owned(), ids.len() - 1);
        ids.len() - 1
    }

    fn push(&mut self, user: &str, item: &str, rating: u8) {
        let i = Self::intern(&mut self.rows, &mut self.row_ids, user);
        let j = Self::intern(&mut self.cols, &mut self.col_ids, item);
        if self.cells.insert((i, j), rating).is_some() {
            self.duplicates += 1;
        }
    }

    /// Orders rows and columns by id (numerically when every id is a number).
    fn finish(self, levels: u8) -> Result<LoadedRatings> {
        if self.cells.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no ratings found".into(),
            });
        }
        let (row_order, row_ids) = sorted_ids(self.row_ids);
        let (col_order, col_ids) = sorted_ids(self.col_ids);
        let entries = self
            .cells
            .into_iter()
            .map(|((i, j), v)| Entry::new(row_order[i], col_order[j], v))
            .collect();
        let matrix = SparseRatingMatrix::new(row_ids.len(), col_ids.len(), RatingScale::uniform(col_ids.len(), levels), entries)?;
        Ok(LoadedRatings {
            matrix,
            row_ids,
            col_ids,
            duplicates: self.duplicates,
        })
    }
}

/// Sorted ids and, for each insertion index, its position in sorted order.
fn sorted_ids(ids: Vec<String>) -> (Vec<usize>, Vec<String>) {
    let numeric: Option<Vec<u64>> = ids.iter().map(|s| s.parse().ok()).collect();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    match numeric {
        Some(n) => order.sort_by_key(|&k| n[k]),
        None => order.sort_by(|&a, &b| ids[a].cmp(&ids[b])),
    }
    let mut position = vec![0; ids.len()];
    for (pos, &k) in order.iter().enumerate() {
        position[k] = pos;
    }
    let sorted = order.iter().map(|&k| ids[k].clone()).collect();
    (position, sorted)
}

fn parse_rating(text: &str, levels: u8, line: usize) -> Result<u8> {
    let value: i64 = text.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("rating `{text}` is not an integer"),
    })?;
    if value < 1 || value > i64::from(levels) {
        return Err(Error::Parse {
            line,
            message: format!("rating {value} outside 1..={levels}"),
        });
    }
    Ok(value as u8)
}

/// Parses tab-separated `user item rating timestamp` lines on a 1 to 5 scale.
pub fn parse_movielens<R: BufRead>(reader: R) -> Result<LoadedRatings> {
    let mut builder = Builder::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let number = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: number,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        for (name, id) in [("user", fields[0]), ("item", fields[1])] {
            if id.parse::<u64>().is_err() {
                return Err(Error::Parse {
                    line: number,
                    message: format!("{name} id `{id}` is not a positive integer"),
                });
            }
        }
        let rating = parse_rating(fields[2], 5, number)?;
        builder.push(fields[0], fields[1], rating);
    }
    builder.finish(5)
}

pub fn read_movielens(path: impl AsRef<Path>) -> Result<LoadedRatings> {
    parse_movielens(BufReader::new(File::open(path)?))
}

/// Parses a long file with a `user,item,rating` header.
pub fn parse_long_csv<R: Read>(reader: R, delimiter: char, levels: u8) -> Result<LoadedRatings> {
    if !delimiter.is_ascii() {
        return Err(Error::InvalidParameter(format!("delimiter `{delimiter}` is not ASCII")));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_ascii_lowercase).collect();
    if header != ["user", "item", "rating"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header user,item,rating, found {}", header.join(",")),
        });
    }
    let mut builder = Builder::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let rating = parse_rating(&record[2], levels, line).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("user `{}`, item `{}`: {message}", &record[0], &record[1]),
            },
            other => other,
        })?;
        builder.push(&record[0], &record[1], rating);
    }
    builder.finish(levels)
}

pub fn read_long_csv(path: impl AsRef<Path>, delimiter: char, levels: u8) -> Result<LoadedRatings> {
    parse_long_csv(File::open(path)?, delimiter, levels)
}

/// Keeps the rows whose id is in `users`, in their original order.
pub fn keep_users(data: &LoadedRatings, users: &HashSet<String>) -> Result<LoadedRatings> {
    let rows: Vec<usize> = (0..data.matrix.rows()).filter(|&i| users.contains(&data.row_ids[i])).collect();
    if rows.is_empty() {
        return Err(Error::InvalidParameter("the two rating files share no user".into()));
    }
    let cols: Vec<usize> = (0..data.matrix.cols()).collect();
    Ok(LoadedRatings {
        matrix: data.matrix.select(&rows, &cols)?,
        row_ids: rows.iter().map(|&i| data.row_ids[i].clone()).collect(),
        col_ids: data.col_ids.clone(),
        duplicates: data.duplicates,
    })
}

/// Drops columns (and rows, when `min_row` is positive) with fewer ratings
/// than the thresholds, repeating until both hold.
pub fn filter_min_ratings(data: &LoadedRatings, min_col: usize, min_row: usize) -> Result<LoadedRatings> {
    let mut current = data.clone();
    loop {
        let m = &current.matrix;
        let cols: Vec<usize> = (0..m.cols()).filter(|&j| m.column_count(j) >= min_col).collect();
        let counts = m.row_counts();
        let rows: Vec<usize> = (0..m.rows()).filter(|&i| counts[i] >= min_row).collect();
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::InvalidParameter("the rating filters remove every entry".into()));
        }
        if rows.len() == m.rows() && cols.len() == m.cols() {
            return Ok(current);
        }
        current = LoadedRatings {
            matrix: m.select(&rows, &cols)?,
            row_ids: rows.iter().map(|&i| current.row_ids[i].clone()).collect(),
            col_ids: cols.iter().map(|&j| current.col_ids[j].clone()).collect(),
            duplicates: current.duplicates,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "196\t242\t3\t881250949\n186\t302\t3\t891717742\n22\t377\t1\t878887116\n196\t302\t5\t1\n";

    #[test]
    fn keep_users_intersects_rows() {
        let data = parse_movielens(SAMPLE.as_bytes()).unwrap();
        let users: HashSet<String> = ["196", "22", "999"].iter().map(|s| s.to_string()).collect();
        let kept = keep_users(&data, &users).unwrap();
        assert_eq!(kept.row_ids, ["22", "196"]);
        assert_eq!(kept.col_ids, data.col_ids);
        assert_eq!(kept.matrix.nnz(), 3);
        assert_eq!(kept.matrix.get(1, 1), Some(5));
        assert!(keep_users(&data, &HashSet::new()).is_err());
    }

    #[test]
    fn movielens_lines() {
        let data = parse_movielens(SAMPLE.as_bytes()).unwrap();
        assert_eq!(data.matrix.rows(), 3);
        assert_eq!(data.matrix.cols(), 3);
        assert_eq!(data.matrix.nnz(), 4);
        assert_eq!(data.row_ids, ["22", "186", "196"]);
        assert_eq!(data.col_ids, ["242", "302", "377"]);
        assert_eq!(data.matrix.get(2, 0), Some(3));
        assert_eq!(data.matrix.get(2, 1), Some(5));
    }

    #[test]
    fn movielens_duplicates_keep_the_last_rating() {
        let text = format!("{SAMPLE}196\t242\t4\t2\n");
        let data = parse_movielens(text.as_bytes()).unwrap();
        assert_eq!(data.duplicates, 1);
        assert_eq!(data.matrix.nnz(), 4);
        assert_eq!(data.matrix.get(2, 0), Some(4));
    }

    #[test]
    fn movielens_errors_carry_line_numbers() {
        let bad = "1\t1\t3\t0\n1\t2\t6\t0\n";
        assert!(matches!(parse_movielens(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let short = "1\t1\t3\n";
        assert!(matches!(parse_movielens(short.as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(parse_movielens("".as_bytes()).is_err());
    }

    #[test]
    fn long_csv_round_trip() {
        let data = parse_movielens(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_long_csv(&mut buf, &data).unwrap();
        assert!(buf.starts_with(b"user,item,rating\n22,377,1\n"));
        let back = parse_long_csv(buf.as_slice(), ',', 5).unwrap();
        assert_eq!(back.matrix, data.matrix);
        assert_eq!(back.row_ids, data.row_ids);

        let numbered = LoadedRatings::with_numbered_ids(data.matrix.clone());
        assert_eq!(numbered.row_ids, ["1", "2", "3"]);
    }

    #[test]
    fn long_csv() {
        let text = "user,item,rating\na,x,1\nb,y,2\nc,z,7\n";
        let data = parse_long_csv(text.as_bytes(), ',', 7).unwrap();
        assert_eq!((data.matrix.rows(), data.matrix.cols(), data.matrix.nnz()), (3, 3, 3));
        let err = parse_long_csv(text.as_bytes(), ',', 5).unwrap_err().to_string();
        assert!(err.contains("user `c`, item `z`"), "{err}");
        assert!(err.contains("line 4"), "{err}");
        assert!(parse_long_csv("".as_bytes(), ',', 5).is_err());
        assert!(parse_long_csv("user,item,rating\n".as_bytes(), ',', 5).is_err());
        let semi = "user;item;rating\n1;2;3\n";
        assert_eq!(parse_long_csv(semi.as_bytes(), ';', 5).unwrap().matrix.nnz(), 1);
    }

    fn grid_data() -> LoadedRatings {
        // Column j has j + 1 ratings; row i rates columns i..6.
        let mut text = String::new();
        for j in 0..6 {
            for i in 0..=j {
                text.push_str(&format!("{}\t{}\t3\t0\n", i + 1, j + 1));
            }
        }
        parse_movielens(text.as_bytes()).unwrap()
    }

    #[test]
    fn column_filter() {
        let data = grid_data();
        assert_eq!(filter_min_ratings(&data, 0, 0).unwrap(), data);
        let f = filter_min_ratings(&data, 3, 0).unwrap();
        assert_eq!(f.col_ids, ["3", "4", "5", "6"]);
        assert_eq!(f.matrix.nnz(), 3 + 4 + 5 + 6);
        assert!(filter_min_ratings(&data, 7, 0).is_err());
    }

    #[test]
    fn joint_filter_reaches_a_fixed_point() {
        let data = grid_data();
        let f = filter_min_ratings(&data, 3, 3).unwrap();
        let m = &f.matrix;
        assert!((0..m.cols()).all(|j| m.column_count(j) >= 3));
        assert!(m.row_counts().iter().all(|&c| c >= 3));
        assert_eq!(filter_min_ratings(&f, 3, 3).unwrap(), f);
    }
}
