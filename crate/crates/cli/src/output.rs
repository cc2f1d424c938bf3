//! Artifact emission: CSV tables, companion plot scripts, key-value reports and the manifest.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.txt";

/// Ordered `key = value` lines, aligned on the `=`.
#[derive(Debug, Default, Clone)]
pub struct KvReport {
    rows: Vec<(String, String)>,
}

impl KvReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.rows.push((key.to_string(), value.to_string()));
    }

    pub fn text(&self) -> String {
        let w = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        self.rows
            .iter()
            .map(|(k, v)| format!("{k:<w$} = {v}\n"))
            .collect()
    }
}

/// Writer rooted at one output directory.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn sub(&self, name: &str) -> io::Result<Self> {
        Self::create(&self.root.join(name))
    }

    pub fn write(&self, name: &str, text: &str) -> io::Result<()> {
        fs::write(self.root.join(name), text)
    }

    pub fn csv<R, I>(&self, name: &str, header: &[&str], rows: I) -> io::Result<()>
    where
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
        I: IntoIterator<Item = R>,
    {
        let mut w = csv::Writer::from_path(self.root.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    /// gnuplot script drawing columns `ys` against column 1 of a headed CSV.
    pub fn plot(&self, name: &str, csv_name: &str, ys: &[usize], log_y: bool) -> io::Result<()> {
        let mut s = String::from("# gnuplot script; any plotting tool can read the CSV directly\n");
        s += "set datafile separator \",\"\nset key autotitle columnhead\n";
        if log_y {
            s += "set logscale y\n";
        }
        let parts: Vec<String> = ys
            .iter()
            .map(|c| format!("\"{csv_name}\" using 1:{c} with lines"))
            .collect();
        s += &format!("plot {}\n", parts.join(", \\\n     "));
        self.write(name, &s)
    }

    /// gnuplot script for a long-format CSV `t, probe, value`, one curve per probe.
    pub fn plot_long(&self, name: &str, csv_name: &str, keys: &[String]) -> io::Result<()> {
        let mut s = String::from("# gnuplot script; any plotting tool can read the CSV directly\n");
        s += "set datafile separator \",\"\n";
        s += &format!("probes = \"{}\"\n", keys.join(" "));
        s += &format!(
            "plot for [p in probes] \"{csv_name}\" using 1:(strcol(2) eq p ? $3 : NaN) skip 1 with lines title p\n"
        );
        self.write(name, &s)
    }

    /// Lists every file below the root with its SHA-256, sorted by path.
    pub fn manifest(&self) -> io::Result<()> {
        let mut files = Vec::new();
        collect(&self.root, &self.root, &mut files)?;
        files.retain(|p| p != MANIFEST);
        files.sort();
        let mut text = String::new();
        for rel in files {
            let bytes = fs::read(self.root.join(&rel))?;
            text += &format!("{:x}  {rel}\n", Sha256::digest(&bytes));
        }
        self.write(MANIFEST, &text)
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("walk stays under the root");
            let parts: Vec<String> = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            out.push(parts.join("/"));
        }
    }
    Ok(())
}

/// Shortest round-trip text for a float, in exponent form when very small or large.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}
