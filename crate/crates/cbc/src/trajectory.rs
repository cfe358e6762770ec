//! Trajectory CSV: header `k,x1,...,xn,u1,...,um`, one row per sample.
//! Row `k` holds `x(k)` and `u(k)`; the input cells of the last row may be
//! empty since `u(T)` is never used.

use std::path::Path;

use cbc_core::data::TrajectoryData;

use crate::error::CliError;

pub struct LoadedTrajectory {
    pub data: TrajectoryData,
    pub n: usize,
    pub m: usize,
}

pub fn load_csv(path: &Path) -> Result<LoadedTrajectory, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&text).map_err(|msg| CliError::Input(format!("{}: {msg}", path.display())))
}

pub fn parse_csv(text: &str) -> Result<LoadedTrajectory, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| format!("header: {e}"))?
        .iter()
        .map(str::to_owned)
        .collect();
    let (n, m) = header_shape(&header)?;

    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut last_input_empty = false;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        if last_input_empty {
            return Err(format!("line {line}: only the final row may omit its input"));
        }
        let k: usize = rec[0].parse().map_err(|_| format!("line {line}: bad sample index `{}`", &rec[0]))?;
        if k != i {
            return Err(format!("line {line}: sample index {k}, expected {i}"));
        }
        let cell = |j: usize| -> Result<f64, String> {
            let v: f64 = rec[j]
                .parse()
                .map_err(|_| format!("line {line}: column `{}` is not a number: `{}`", header[j], &rec[j]))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("line {line}: column `{}` is not finite", header[j]))
            }
        };
        states.push((1..=n).map(cell).collect::<Result<Vec<_>, _>>()?);
        let u_cells = n + 1..n + 1 + m;
        if u_cells.clone().all(|j| rec[j].is_empty()) {
            last_input_empty = true;
        } else {
            inputs.push(u_cells.map(cell).collect::<Result<Vec<_>, _>>()?);
        }
    }
    if states.len() < 2 {
        return Err(format!("need at least 2 rows, found {}", states.len()));
    }
    // A complete final row carries an input that has no successor state.
    inputs.truncate(states.len() - 1);
    if inputs.len() != states.len() - 1 {
        return Err("missing input values".into());
    }
    let data = TrajectoryData::from_samples(&states, &inputs).map_err(|e| e.to_string())?;
    Ok(LoadedTrajectory { data, n, m })
}

fn header_shape(header: &[String]) -> Result<(usize, usize), String> {
    if header.first().map(String::as_str) != Some("k") {
        return Err("header must start with `k`".into());
    }
    let n = header[1..].iter().take_while(|h| h.starts_with('x')).count();
    let m = header.len() - 1 - n;
    if n == 0 || m == 0 {
        return Err("header needs at least one `x` and one `u` column".into());
    }
    for (i, h) in header[1..=n].iter().enumerate() {
        if *h != format!("x{}", i + 1) {
            return Err(format!("state column {} is `{h}`, expected `x{}`", i + 1, i + 1));
        }
    }
    for (i, h) in header[n + 1..].iter().enumerate() {
        if *h != format!("u{}", i + 1) {
            return Err(format!("input column {} is `{h}`, expected `u{}`", i + 1, i + 1));
        }
    }
    Ok((n, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_input_may_be_empty() {
        let t = parse_csv("k,x1,u1\n0,1.0,0.5\n1,2.0,-1\n2,3.0,\n").unwrap();
        assert_eq!((t.n, t.m, t.data.samples()), (1, 1, 2));
        assert_eq!(t.data.x_plus[(0, 1)], 3.0);
    }

    #[test]
    fn full_final_row_is_accepted() {
        let t = parse_csv("k,x1,u1\n0,1.0,0.5\n1,2.0,-1\n").unwrap();
        assert_eq!(t.data.samples(), 1);
    }

    #[test]
    fn malformed_files_are_rejected() {
        for bad in [
            "x1,u1\n1,2\n2,3\n",
            "k,x2,u1\n0,1,1\n1,1,\n",
            "k,x1,u1\n0,1,1\n2,1,\n",
            "k,x1,u1\n0,1,\n1,1,\n",
            "k,x1,u1\n0,abc,1\n1,1,\n",
            "k,x1,u1\n0,1,1\n",
            "k,x1,u1\n0,1,1\n1,1\n",
        ] {
            assert!(parse_csv(bad).is_err(), "{bad}");
        }
    }
}
