//! Trace files: ground-truth runtimes of every algorithm per instance, plus
//! observation logs and instance lists for the external backend.
//!
//! A trace has the header `instance_id,x_1..x_F,t_1..t_K`; a runtime of `inf`
//! means the algorithm never halts. Floats are written in shortest round-trip
//! form, so a trace read back reproduces the runs bit for bit.

use std::io::{Read, Write};

use crate::csvio::{self, fmt_f64, parse_f64};
use crate::error::{Error, Result};
use crate::exec::AlgorithmRun;
use crate::runtime_model::RuntimeObservation;

pub const TRACE_SCHEMA: &str = "gambleta.trace/1";
pub const OBSERVATION_SCHEMA: &str = "gambleta.observations/1";
pub const INSTANCE_SCHEMA: &str = "gambleta.instances/1";

fn shape(runs: &[AlgorithmRun]) -> Result<(usize, usize)> {
    let Some(first) = runs.first() else {
        return Ok((0, 0));
    };
    let shape = (first.features.len(), first.n_algorithms());
    for r in runs {
        if (r.features.len(), r.n_algorithms()) != shape {
            return Err(Error::Format(format!(
                "instance {} has {} features and {} algorithms, expected {} and {}",
                r.instance_id,
                r.features.len(),
                r.n_algorithms(),
                shape.0,
                shape.1
            )));
        }
    }
    Ok(shape)
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Writes runs as a trace. Every run must have the same feature count and
/// number of algorithms.
pub fn write_trace<W: Write>(mut out: W, runs: &[AlgorithmRun]) -> Result<()> {
    let (n_features, k) = shape(runs)?;
    csvio::write_schema(&mut out, TRACE_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("instance_id".to_string())
        .chain(numbered("x_", n_features))
        .chain(numbered("t_", k))
        .collect();
    w.write_record(&header)?;
    for r in runs {
        let row: Vec<String> = std::iter::once(r.instance_id.clone())
            .chain(r.features.iter().map(|&x| fmt_f64(x)))
            .chain(r.runtimes.iter().map(|t| t.map_or_else(|| "inf".to_string(), fmt_f64)))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Positions of the `x_` and `t_` columns, which must be numbered from 1 in
/// order after `first_fixed` leading columns.
fn split_header(header: &csv::StringRecord, fixed: &[&str]) -> Result<(usize, usize)> {
    for (i, name) in fixed.iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(Error::Format(format!("column {} must be `{name}`", i + 1)));
        }
    }
    let rest: Vec<&str> = header.iter().skip(fixed.len()).collect();
    let n_features = rest.iter().take_while(|c| c.starts_with("x_")).count();
    let n_times = rest.len() - n_features;
    let expected: Vec<String> = numbered("x_", n_features).chain(numbered("t_", n_times)).collect();
    if rest != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Format(format!(
            "header must be {} followed by x_1.. then t_1.., got `{}`",
            fixed.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok((n_features, n_times))
}

/// The reader starts after the schema line, hence the offset.
fn row_error(record: &csv::StringRecord, msg: impl std::fmt::Display) -> Error {
    let line = record.position().map_or(0, |p| p.line() + 1);
    Error::Format(format!("line {line}: {msg}"))
}

fn parse_runtime(field: &str) -> Result<Option<f64>> {
    let t = parse_f64(field)?;
    Ok(if t == f64::INFINITY { None } else { Some(t) })
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<AlgorithmRun>> {
    let mut rdr = csvio::reader(input, TRACE_SCHEMA)?;
    let (n_features, k) = split_header(rdr.headers()?, &["instance_id"])?;
    if k == 0 {
        return Err(Error::Format("a trace needs at least one t_ column".into()));
    }
    let mut runs = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let parsed = (|| {
            let features = (1..=n_features).map(|i| parse_f64(&record[i])).collect::<Result<Vec<_>>>()?;
            let runtimes = (1 + n_features..1 + n_features + k)
                .map(|i| parse_runtime(&record[i]))
                .collect::<Result<Vec<_>>>()?;
            AlgorithmRun::new(&record[0], features, runtimes)
        })();
        runs.push(parsed.map_err(|e| row_error(&record, e))?);
    }
    Ok(runs)
}

/// Observation log: `instance_id,x_1..x_F,algorithm,time,censored`.
pub fn write_observations<W: Write>(mut out: W, observations: &[RuntimeObservation]) -> Result<()> {
    let n_features = observations.first().map_or(0, |o| o.features.len());
    csvio::write_schema(&mut out, OBSERVATION_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("instance_id".to_string())
        .chain(numbered("x_", n_features))
        .chain(["algorithm", "time", "censored"].map(String::from))
        .collect();
    w.write_record(&header)?;
    for o in observations {
        if o.features.len() != n_features {
            return Err(Error::Format(format!("observation of {} has a different feature count", o.instance_id)));
        }
        let row: Vec<String> = std::iter::once(o.instance_id.clone())
            .chain(o.features.iter().map(|&x| fmt_f64(x)))
            .chain([o.algorithm.to_string(), fmt_f64(o.time), o.censored.to_string()])
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations<R: Read>(input: R) -> Result<Vec<RuntimeObservation>> {
    let mut rdr = csvio::reader(input, OBSERVATION_SCHEMA)?;
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 4 || header.iter().skip(n - 3).collect::<Vec<_>>() != ["algorithm", "time", "censored"] {
        return Err(Error::Format("observation header must end with algorithm,time,censored".into()));
    }
    let trimmed: csv::StringRecord = header.iter().take(n - 3).collect();
    let (n_features, extra) = split_header(&trimmed, &["instance_id"])?;
    if extra != 0 {
        return Err(Error::Format("unexpected t_ columns in an observation log".into()));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let parsed = (|| {
            let features = (1..=n_features).map(|i| parse_f64(&record[i])).collect::<Result<Vec<_>>>()?;
            let algorithm = record[n - 3]
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad algorithm index `{}`", &record[n - 3])))?;
            let time = parse_f64(&record[n - 2])?;
            if !(time.is_finite() && time > 0.0) {
                return Err(Error::Format(format!("time must be finite and positive, got {time}")));
            }
            let censored = record[n - 1]
                .parse::<bool>()
                .map_err(|_| Error::Format(format!("bad censored flag `{}`", &record[n - 1])))?;
            Ok(RuntimeObservation {
                instance_id: record[0].to_string(),
                features,
                algorithm,
                time,
                censored,
            })
        })();
        out.push(parsed.map_err(|e| row_error(&record, e))?);
    }
    Ok(out)
}

/// An instance for the external backend: a file handed to every command.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub instance_id: String,
    pub path: String,
    pub features: Vec<f64>,
}

/// Instance list: `instance_id,path,x_1..x_F`.
pub fn read_instances<R: Read>(input: R) -> Result<Vec<InstanceFile>> {
    let mut rdr = csvio::reader(input, INSTANCE_SCHEMA)?;
    let (n_features, extra) = split_header(rdr.headers()?, &["instance_id", "path"])?;
    if extra != 0 {
        return Err(Error::Format("instance lists carry no t_ columns".into()));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let features = (2..2 + n_features)
            .map(|i| parse_f64(&record[i]))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| row_error(&record, e))?;
        out.push(InstanceFile {
            instance_id: record[0].to_string(),
            path: record[1].to_string(),
            features,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs() -> Vec<AlgorithmRun> {
        vec![
            AlgorithmRun::new("a", vec![0.1, 20.0], vec![Some(1.0 / 3.0), None]).unwrap(),
            AlgorithmRun::new("b", vec![1e-300, 250.0], vec![None, Some(7.25)]).unwrap(),
        ]
    }

    #[test]
    fn trace_round_trip() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &runs()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema=gambleta.trace/1\ninstance_id,x_1,x_2,t_1,t_2\n"));
        assert!(text.contains(",inf"));
        assert_eq!(read_trace(&buf[..]).unwrap(), runs());
    }

    #[test]
    fn trace_errors_name_the_line() {
        let text = "# schema=gambleta.trace/1\ninstance_id,t_1,t_2\na,1,2\nb,inf,inf\n";
        let err = read_trace(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        let text = "# schema=gambleta.trace/1\ninstance_id,t_1,t_2\na,1,x\n";
        assert!(read_trace(text.as_bytes()).unwrap_err().to_string().contains("line 3"));
        assert!(read_trace("instance_id,t_1\na,1\n".as_bytes()).is_err());
        let text = "# schema=gambleta.trace/1\ninstance_id,t_2\na,1\n";
        assert!(read_trace(text.as_bytes()).is_err());
    }

    #[test]
    fn observations_round_trip() {
        let obs = vec![
            RuntimeObservation {
                instance_id: "a".into(),
                features: vec![3.0],
                algorithm: 0,
                time: 0.1,
                censored: false,
            },
            RuntimeObservation {
                instance_id: "a".into(),
                features: vec![3.0],
                algorithm: 1,
                time: 0.1,
                censored: true,
            },
        ];
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        assert_eq!(read_observations(&buf[..]).unwrap(), obs);
    }

    #[test]
    fn instance_list() {
        let text = "# schema=gambleta.instances/1\ninstance_id,path,x_1\np1,/tmp/p1.cnf,42\n";
        let list = read_instances(text.as_bytes()).unwrap();
        assert_eq!(list[0].path, "/tmp/p1.cnf");
        assert_eq!(list[0].features, vec![42.0]);
    }
}
