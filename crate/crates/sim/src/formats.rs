//! Text formats on disk.
//!
//! CSV files open with `#schema=1`, optionally followed by `#key=value`
//! metadata lines, then a header row. Agents are 1-based everywhere on disk.
//! Floats are written in Rust's shortest round-trip form, so identical runs
//! give byte-identical files.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use iadmm_core::adversary::scoring::report_rows;
use iadmm_core::adversary::AttackReport;
use iadmm_core::objectives::Dataset;
use iadmm_core::solver::{GroundTruth, IterationRecord};
use iadmm_core::topology::Graph;
use iadmm_core::transcript::{Observation, Transcript};

use crate::experiment::HarnessError;

pub const SCHEMA: &str = "#schema=1";

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::File::create(&tmp)?.write_all(bytes)?;
    fs::rename(&tmp, path)
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

fn optional(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn csv_bytes(meta: &[(&str, String)], header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, HarnessError> {
    let mut out = Vec::new();
    writeln!(out, "{SCHEMA}")?;
    for (k, v) in meta {
        writeln!(out, "#{k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

/// Schema line, header and rows without metadata.
pub fn csv_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, HarnessError> {
    csv_bytes(&[], &names(header), rows)
}

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn bad(what: &'static str, message: impl Into<String>) -> HarnessError {
    HarnessError::Format { what, message: message.into() }
}

/// Splits the leading `#` lines off and checks the schema tag.
fn read_meta(what: &'static str, text: &str) -> Result<(Vec<(String, String)>, String), HarnessError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SCHEMA) {
        return Err(bad(what, format!("first line must be {SCHEMA}")));
    }
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in lines {
        if body.is_empty() && line.starts_with('#') {
            let (k, v) = line[1..].split_once('=').ok_or_else(|| bad(what, format!("bad metadata line {line:?}")))?;
            meta.push((k.to_string(), v.to_string()));
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

fn meta_value<'a>(what: &'static str, meta: &'a [(String, String)], key: &str) -> Result<&'a str, HarnessError> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| bad(what, format!("missing #{key}")))
}

fn parse<T: std::str::FromStr>(what: &'static str, field: &str, raw: &str) -> Result<T, HarnessError> {
    raw.trim().parse().map_err(|_| bad(what, format!("cannot parse {field} {raw:?}")))
}

pub fn trace_csv(records: &[IterationRecord]) -> Result<Vec<u8>, HarnessError> {
    let header = names(&[
        "k", "agent", "accuracy", "lagrangian", "r_primal", "r_dualstep", "r_gradsum", "comm_units", "gamma", "omega_norm",
    ]);
    let rows = records.iter().map(|r| {
        vec![
            r.k.to_string(),
            (r.agent + 1).to_string(),
            float(r.accuracy),
            float(r.aug_lagrangian),
            float(r.primal_residual),
            float(r.dual_step),
            float(r.grad_residual),
            r.comm_units.to_string(),
            optional(r.gamma),
            optional(r.omega_norm),
        ]
    });
    csv_bytes(&[], &header, rows)
}

pub fn transcript_csv(t: &Transcript) -> Result<Vec<u8>, HarnessError> {
    let meta = [
        ("n_agents", t.n_agents.to_string()),
        ("rho", float(t.rho)),
        ("initial_token", t.initial_token.iter().map(|v| float(*v)).collect::<Vec<_>>().join(";")),
    ];
    let mut header = names(&["k", "from_agent", "to_agent"]);
    header.extend((1..=t.dim).map(|c| format!("z{c}")));
    let rows = t.observations.iter().map(|o| {
        let mut row = vec![o.k.to_string(), (o.sender + 1).to_string(), (o.receiver + 1).to_string()];
        row.extend(o.token.iter().map(|v| float(*v)));
        row
    });
    csv_bytes(&meta, &header, rows)
}

pub fn read_transcript(text: &str) -> Result<Transcript, HarnessError> {
    const WHAT: &str = "transcript";
    let (meta, body) = read_meta(WHAT, text)?;
    let n_agents: usize = parse(WHAT, "n_agents", meta_value(WHAT, &meta, "n_agents")?)?;
    let rho: f64 = parse(WHAT, "rho", meta_value(WHAT, &meta, "rho")?)?;
    let initial: Vec<f64> =
        meta_value(WHAT, &meta, "initial_token")?.split(';').map(|v| parse(WHAT, "initial_token", v)).collect::<Result<_, _>>()?;
    let mut t = Transcript::new(n_agents, rho, initial);
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let width = reader.headers()?.len();
    if width != 3 + t.dim {
        return Err(bad(WHAT, format!("{width} columns for a {}-dimensional token", t.dim)));
    }
    for record in reader.records() {
        let record = record?;
        let agent = |i: usize, name: &str| -> Result<usize, HarnessError> {
            let a: usize = parse(WHAT, name, &record[i])?;
            a.checked_sub(1).ok_or_else(|| bad(WHAT, format!("{name} is 1-based")))
        };
        t.observations.push(Observation {
            k: parse(WHAT, "k", &record[0])?,
            sender: agent(1, "from_agent")?,
            receiver: agent(2, "to_agent")?,
            token: (3..width).map(|i| parse(WHAT, "z", &record[i])).collect::<Result<_, _>>()?,
        });
    }
    t.validate().map_err(|e| bad(WHAT, e.to_string()))?;
    Ok(t)
}

/// Estimates of the listed agents for every iteration and coordinate, with
/// truth columns left empty when `truth` is `None`.
pub fn attack_csv(report: &AttackReport, agents: &[usize], truth: Option<&GroundTruth>) -> Result<Vec<u8>, HarnessError> {
    let header = names(&["agent", "k", "coordinate", "truth_x", "est_x", "truth_y", "est_y", "abs_err_x", "abs_err_y"]);
    let mut rows = Vec::new();
    for &agent in agents {
        for r in report_rows(report, agent, truth) {
            rows.push(vec![
                (agent + 1).to_string(),
                r.k.to_string(),
                (r.coordinate + 1).to_string(),
                optional(r.truth_x),
                float(r.est_x),
                optional(r.truth_y),
                float(r.est_y),
                optional(r.abs_err_x()),
                optional(r.abs_err_y()),
            ]);
        }
    }
    csv_bytes(&[("last", report.last.to_string())], &header, rows)
}

pub fn dataset_csv(data: &Dataset) -> Result<Vec<u8>, HarnessError> {
    let mut header: Vec<String> = (1..=data.dim()).map(|c| format!("x{c}")).collect();
    header.push("target".into());
    let rows = data.samples().map(|(o, t)| {
        let mut row: Vec<String> = o.iter().map(|v| float(*v)).collect();
        row.push(float(t));
        row
    });
    csv_bytes(&[], &header, rows)
}

pub fn read_dataset(text: &str) -> Result<Dataset, HarnessError> {
    const WHAT: &str = "dataset";
    let (_, body) = read_meta(WHAT, text)?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(bad(WHAT, "need at least one feature and the target"));
    }
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let row: Vec<f64> = record.iter().map(|v| parse(WHAT, "value", v)).collect::<Result<_, _>>()?;
        targets.push(row[width - 1]);
        inputs.push(row[..width - 1].to_vec());
    }
    Dataset::new(inputs, targets).map_err(|e| bad(WHAT, e.to_string()))
}

/// First line `N`, then one `u v` line per edge, 1-based.
pub fn graph_text(graph: &Graph) -> String {
    let mut out = format!("{}\n", graph.n_agents());
    for &(u, v) in graph.edges() {
        out.push_str(&format!("{} {}\n", u + 1, v + 1));
    }
    out
}

pub fn read_graph(reader: impl Read) -> Result<Graph, HarnessError> {
    const WHAT: &str = "graph";
    let mut lines = BufReader::new(reader).lines();
    let n: usize = parse(WHAT, "agent count", &lines.next().ok_or_else(|| bad(WHAT, "empty file"))??)?;
    let mut edges = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(|s| parse::<usize>(WHAT, "endpoint", s));
        match (it.next(), it.next(), it.next()) {
            (Some(u), Some(v), None) => {
                let (u, v) = (u?, v?);
                if u == 0 || v == 0 {
                    return Err(bad(WHAT, "agents are 1-based"));
                }
                edges.push((u - 1, v - 1));
            }
            _ => return Err(bad(WHAT, format!("expected `u v`, got {line:?}"))),
        }
    }
    Graph::from_edges(n, &edges).map_err(|e| bad(WHAT, e.to_string()))
}

/// gnuplot script plotting a trace file (and an attack file when given).
pub fn gnuplot_script(trace: &str, attack: Option<&str>) -> String {
    let mut s = format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set logscale y\nset xlabel 'communication units'\n\
         set terminal pngcairo size 900,600\n\
         set output 'accuracy.png'\nplot '{trace}' using 8:3 with lines title 'accuracy'\n\
         set output 'residuals.png'\nplot '{trace}' using 8:5 with lines title 'primal', '' using 8:7 with lines title 'dual sum'\n"
    );
    if let Some(attack) = attack {
        s.push_str(&format!(
            "set xlabel 'k'\nset output 'attack_error.png'\n\
             plot '{attack}' using 2:8 with lines title '|x est - x|', '' using 2:9 with lines title '|y est - y|'\n"
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use iadmm_core::topology::generate_graph;

    #[test]
    fn transcript_round_trips() {
        let mut t = Transcript::new(3, 2.5, vec![0.0, 0.1]);
        for k in 0..4 {
            t.observations.push(Observation { k, sender: k % 3, receiver: (k + 1) % 3, token: vec![k as f64 / 3.0, -1e-300] });
        }
        let bytes = transcript_csv(&t).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("#schema=1\n#n_agents=3\n"));
        assert!(text.contains("k,from_agent,to_agent,z1,z2\n0,1,2,"));
        assert_eq!(read_transcript(&text).unwrap(), t);
    }

    #[test]
    fn transcript_reader_rejects_garbage() {
        assert!(read_transcript("k,from_agent\n").is_err());
        let broken = "#schema=1\n#n_agents=3\n#rho=1\n#initial_token=0\nk,from_agent,to_agent,z1\n0,1,2,0.5\n1,3,1,0.2\n";
        assert!(matches!(read_transcript(broken), Err(HarnessError::Format { .. })));
    }

    #[test]
    fn graph_round_trips() {
        let g = generate_graph(12, 0.4, 3).unwrap();
        let text = graph_text(&g);
        assert!(text.starts_with("12\n"));
        assert_eq!(read_graph(text.as_bytes()).unwrap(), g);
        assert!(read_graph("4\n1 2\n2 3\n3 4\n".as_bytes()).is_err());
        assert!(read_graph("3\n0 1\n".as_bytes()).is_err());
    }

    #[test]
    fn dataset_round_trips() {
        let d = Dataset::new(vec![vec![0.25, 1.0 / 3.0], vec![2.0, -1.0]], vec![1.0, -1.0]).unwrap();
        let text = String::from_utf8(dataset_csv(&d).unwrap()).unwrap();
        assert!(text.contains("x1,x2,target\n0.25,"));
        assert_eq!(read_dataset(&text).unwrap(), d);
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_atomic(&path, b"x").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"x");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
