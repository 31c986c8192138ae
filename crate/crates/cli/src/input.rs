use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use ndarray::Array2;

use crate::CliError;

/// A numeric matrix read from CSV, with column names when the file had a
/// header row.
#[derive(Debug)]
pub struct InputMatrix {
    pub values: Array2<f64>,
    pub names: Option<Vec<String>>,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn looks_like_header(record: &StringRecord) -> bool {
    record.iter().all(|s| s.parse::<f64>().is_err())
}

/// Reads a comma-separated numeric matrix. The first line is a header if
/// none of its fields parses as a number.
pub fn read_matrix(path: &Path) -> Result<InputMatrix, CliError> {
    let shown = path.display();
    let file = File::open(path).map_err(|e| CliError::Input(format!("{shown}: {e}")))?;
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(file);

    let mut names = None;
    let mut rows: Vec<f64> = Vec::new();
    let mut width = None;
    let mut data_row = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{shown}: {e}")))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && looks_like_header(&record) {
            names = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        data_row += 1;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CliError::Input(format!(
                "{shown}: line {line} (row {data_row}) has {} fields, expected {expected}",
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let value = parse_cell(cell).ok_or_else(|| {
                CliError::Input(format!(
                    "{shown}: line {line} (row {data_row}), column {}: cannot parse {cell:?} as a finite number",
                    j + 1
                ))
            })?;
            rows.push(value);
        }
    }
    let p = width.unwrap_or(0);
    if data_row == 0 || p == 0 {
        return Err(CliError::Input(format!("{shown}: no data rows")));
    }
    let values = Array2::from_shape_vec((data_row, p), rows).expect("row widths checked");
    Ok(InputMatrix { values, names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_with_and_without_header() {
        let f = write("a,b\n1,2\n3,4\n");
        let m = read_matrix(f.path()).unwrap();
        assert_eq!(m.values, ndarray::array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(m.names.unwrap(), vec!["a", "b"]);

        let f = write("1, 2\n3 ,4\n");
        let m = read_matrix(f.path()).unwrap();
        assert_eq!(m.values, ndarray::array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(m.names.is_none());
    }

    #[test]
    fn diagnostics_name_row_and_column() {
        let f = write("1,2\n3,4\n5,6\n7,8\n9,abc\n");
        let err = read_matrix(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 5 (row 5), column 2"), "{err}");

        let f = write("x,y\n1,2\n3\n");
        let err = read_matrix(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 3 (row 2)"), "{err}");

        let f = write("1,nan\n");
        assert!(read_matrix(f.path()).is_err());
        let f = write("a,b\n");
        assert!(read_matrix(f.path()).unwrap_err().to_string().contains("no data rows"));
    }
}
