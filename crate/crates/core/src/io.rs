//! On-disk formats.
//!
//! Text formats write floats with Rust's shortest round-trip representation,
//! so reading a dump back gives bit-identical values.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::brwre::{EmpiricalMeasurePath, Event, EventKind, Point};
use crate::environment::{EnhancedEnvironment, NoiseDistribution, NoiseRealization, NoiseSpec, NormRecord};
use crate::error::{Error, Result};
use crate::lattice::{Field, Flavor, LatticeSpec};
use crate::pam::{EigenPair, Trajectory};
use crate::spectral::SpectrumCoeffs;
use crate::verify::TestReport;

const FIELD_HEADER: &str = "n,L,d,flavor";
const BINARY_MAGIC: &[u8; 4] = b"KRSF";
/// Bytes per event record.
pub const EVENT_RECORD_LEN: usize = 25;

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr>(what: &'static str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(what, format!("cannot parse `{s}`")))
}

fn spec_line(spec: &LatticeSpec, flavor: Flavor) -> String {
    format!("{},{},{},{}", spec.n(), spec.l(), spec.d(), flavor)
}

fn parse_spec_line(what: &'static str, line: &str) -> Result<(LatticeSpec, Flavor)> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::format(what, format!("expected n,L,d,flavor, got `{line}`")));
    }
    let spec = LatticeSpec::new(parse(what, parts[0])?, parse(what, parts[1])?, parse(what, parts[2])?)?;
    let flavor = Flavor::parse(parts[3]).ok_or_else(|| Error::format(what, format!("unknown flavor `{}`", parts[3])))?;
    Ok((spec, flavor))
}

/// Field dump: `n,L,d,flavor` header and values, then `index,value` rows.
pub fn field_to_csv(field: &Field, flavor: Flavor) -> String {
    let mut out = String::new();
    writeln!(out, "{FIELD_HEADER}").unwrap();
    writeln!(out, "{}", spec_line(field.spec(), flavor)).unwrap();
    writeln!(out, "index,value").unwrap();
    for (i, v) in field.values().iter().enumerate() {
        writeln!(out, "{i},{v}").unwrap();
    }
    out
}

fn field_from_lines<'a>(what: &'static str, lines: &mut impl Iterator<Item = &'a str>) -> Result<(Field, Flavor)> {
    let mut next = |expect: &str| -> Result<&'a str> {
        lines
            .next()
            .ok_or_else(|| Error::format(what, format!("missing {expect}")))
    };
    if next("header")?.trim() != FIELD_HEADER {
        return Err(Error::format(what, "bad header"));
    }
    let (spec, flavor) = parse_spec_line(what, next("lattice line")?)?;
    if next("column line")?.trim() != "index,value" {
        return Err(Error::format(what, "bad column line"));
    }
    let mut values = vec![0.0; spec.num_sites()];
    for i in 0..spec.num_sites() {
        let row = next("row")?;
        let (a, b) = row
            .split_once(',')
            .ok_or_else(|| Error::format(what, format!("bad row `{row}`")))?;
        if parse::<usize>(what, a)? != i {
            return Err(Error::format(what, format!("row {i} out of order")));
        }
        values[i] = parse(what, b)?;
    }
    Ok((Field::from_values(spec, values)?, flavor))
}

pub fn field_from_csv(text: &str) -> Result<(Field, Flavor)> {
    let mut lines = text.lines();
    let out = field_from_lines("field dump", &mut lines)?;
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::format("field dump", "trailing rows"));
    }
    Ok(out)
}

/// Binary field: magic, `n, L, d` as u64, flavor byte, then little-endian
/// f64 values in site order.
pub fn field_to_binary(field: &Field, flavor: Flavor) -> Vec<u8> {
    let spec = field.spec();
    let mut out = Vec::with_capacity(29 + 8 * field.values().len());
    out.extend_from_slice(BINARY_MAGIC);
    for v in [spec.n(), spec.l(), spec.d()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.push(match flavor {
        Flavor::Dirichlet => 0,
        Flavor::Neumann => 1,
    });
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn field_from_binary(bytes: &[u8]) -> Result<(Field, Flavor)> {
    const WHAT: &str = "binary field";
    if bytes.len() < 29 || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::format(WHAT, "missing header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().unwrap()) as usize;
    let spec = LatticeSpec::new(word(0), word(1), word(2))?;
    let flavor = match bytes[28] {
        0 => Flavor::Dirichlet,
        1 => Flavor::Neumann,
        b => return Err(Error::format(WHAT, format!("unknown flavor byte {b}"))),
    };
    let body = &bytes[29..];
    if body.len() != 8 * spec.num_sites() {
        return Err(Error::format(WHAT, format!("expected {} values", spec.num_sites())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((Field::from_values(spec, values)?, flavor))
}

pub fn save_field(path: &Path, field: &Field, flavor: Flavor) -> Result<()> {
    write_file(path, field_to_csv(field, flavor).as_bytes())
}

pub fn load_field(path: &Path) -> Result<(Field, Flavor)> {
    field_from_csv(&read_text(path)?)
}

pub fn save_field_binary(path: &Path, field: &Field, flavor: Flavor) -> Result<()> {
    write_file(path, &field_to_binary(field, flavor))
}

pub fn load_field_binary(path: &Path) -> Result<(Field, Flavor)> {
    field_from_binary(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn multi_index_str(k: &[i64], d: usize) -> String {
    k[..d].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(":")
}

/// Spectrum dump: field header, then `k,coefficient` rows with `k` written `k1[:k2]`.
pub fn spectrum_to_csv(c: &SpectrumCoeffs) -> String {
    let spec = c.spec();
    let mut out = String::new();
    writeln!(out, "{FIELD_HEADER}").unwrap();
    writeln!(out, "{}", spec_line(spec, c.flavor())).unwrap();
    writeln!(out, "k,coefficient").unwrap();
    for (k, v) in c.indices().iter().zip(c.coeffs()) {
        writeln!(out, "{},{v}", multi_index_str(&k.k(), spec.d())).unwrap();
    }
    out
}

pub fn spectrum_from_csv(text: &str) -> Result<SpectrumCoeffs> {
    const WHAT: &str = "spectrum dump";
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(FIELD_HEADER) {
        return Err(Error::format(WHAT, "bad header"));
    }
    let (spec, flavor) = parse_spec_line(WHAT, lines.next().unwrap_or(""))?;
    if lines.next().map(str::trim) != Some("k,coefficient") {
        return Err(Error::format(WHAT, "bad column line"));
    }
    let mut out = SpectrumCoeffs::zeros(spec, flavor);
    let expected = out.indices();
    let mut seen = 0;
    for row in lines.filter(|l| !l.trim().is_empty()) {
        let (k, v) = row.split_once(',').ok_or_else(|| Error::format(WHAT, format!("bad row `{row}`")))?;
        let mut idx = [0i64; 2];
        for (a, part) in k.split(':').enumerate() {
            if a >= spec.d() {
                return Err(Error::format(WHAT, format!("too many components in `{k}`")));
            }
            idx[a] = parse(WHAT, part)?;
        }
        let key = crate::spectral::DualIndex::new(&spec, idx, flavor)?;
        if expected.get(seen) != Some(&key) {
            return Err(Error::format(WHAT, format!("row `{row}` out of order")));
        }
        out.set(&key, parse(WHAT, v)?);
        seen += 1;
    }
    if seen != expected.len() {
        return Err(Error::format(WHAT, format!("expected {} rows, got {seen}", expected.len())));
    }
    Ok(out)
}

const ENV_HEADER: &str = "n,L,d,phi,seed,kappa_n,c_n,nu";

/// Environment archive: constants header, then `[xi]`, `[x]` and (in `d = 2`)
/// `[resonant_renormalized]` blocks in the field dump format.
pub fn environment_to_text(env: &EnhancedEnvironment) -> String {
    let spec = env.spec();
    let mut out = String::new();
    writeln!(out, "{ENV_HEADER}").unwrap();
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        spec.n(),
        spec.l(),
        spec.d(),
        env.noise.spec.distribution,
        env.noise.spec.seed,
        env.kappa_n,
        env.c_n,
        env.nu
    )
    .unwrap();
    let mut block = |name: &str, f: &Field| {
        writeln!(out, "[{name}]").unwrap();
        out.push_str(&field_to_csv(f, Flavor::Neumann));
    };
    block("xi", env.xi());
    block("x", &env.x);
    if let Some(r) = &env.resonant_renormalized {
        block("resonant_renormalized", r);
    }
    out
}

pub fn environment_from_text(text: &str) -> Result<EnhancedEnvironment> {
    const WHAT: &str = "environment archive";
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(ENV_HEADER) {
        return Err(Error::format(WHAT, "bad header"));
    }
    let vals: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    if vals.len() != 8 {
        return Err(Error::format(WHAT, "bad constants line"));
    }
    let spec = LatticeSpec::new(parse(WHAT, vals[0])?, parse(WHAT, vals[1])?, parse(WHAT, vals[2])?)?;
    let distribution =
        NoiseDistribution::parse(vals[3]).ok_or_else(|| Error::format(WHAT, format!("unknown law `{}`", vals[3])))?;
    let seed: u64 = parse(WHAT, vals[4])?;
    let kappa_n: f64 = parse(WHAT, vals[5])?;
    let c_n: f64 = parse(WHAT, vals[6])?;
    let nu: f64 = parse(WHAT, vals[7])?;
    let mut block = |name: &str| -> Result<Option<Field>> {
        match lines.next() {
            None => Ok(None),
            Some(l) if l.trim() == format!("[{name}]") => {
                let (f, _) = field_from_lines(WHAT, &mut lines)?;
                spec.check_same(f.spec())?;
                Ok(Some(f))
            }
            Some(l) => Err(Error::format(WHAT, format!("expected [{name}], got `{l}`"))),
        }
    };
    let xi = block("xi")?.ok_or_else(|| Error::format(WHAT, "missing [xi]"))?;
    let x = block("x")?.ok_or_else(|| Error::format(WHAT, "missing [x]"))?;
    let resonant_renormalized = block("resonant_renormalized")?;
    if (spec.d() == 2) != resonant_renormalized.is_some() {
        return Err(Error::format(WHAT, "resonant block present iff d = 2"));
    }
    Ok(EnhancedEnvironment {
        noise: NoiseRealization {
            spec: NoiseSpec::new(spec, distribution, seed),
            xi,
        },
        x,
        resonant_renormalized,
        kappa_n,
        c_n,
        nu,
    })
}

pub fn save_environment(path: &Path, env: &EnhancedEnvironment) -> Result<()> {
    write_file(path, environment_to_text(env).as_bytes())
}

pub fn load_environment(path: &Path) -> Result<EnhancedEnvironment> {
    environment_from_text(&read_text(path)?)
}

/// Trajectory dump: one `[t=<time>]` block per stored state.
pub fn trajectory_to_text(traj: &Trajectory) -> String {
    let mut out = String::new();
    for (t, u) in traj.times.iter().zip(&traj.states) {
        writeln!(out, "[t={t}]").unwrap();
        out.push_str(&field_to_csv(u, Flavor::Dirichlet));
    }
    out
}

pub fn trajectory_from_text(text: &str) -> Result<Trajectory> {
    const WHAT: &str = "trajectory dump";
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut times = Vec::new();
    let mut states = Vec::new();
    while let Some(head) = lines.next() {
        let t = head
            .trim()
            .strip_prefix("[t=")
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::format(WHAT, format!("bad block header `{head}`")))?;
        times.push(parse(WHAT, t)?);
        states.push(field_from_lines(WHAT, &mut lines)?.0);
    }
    if states.is_empty() {
        return Err(Error::format(WHAT, "no states"));
    }
    Ok(Trajectory { times, states })
}

pub fn eigenpair_report(ep: &EigenPair) -> String {
    format!("lambda,residual,min_interior_value\n{},{},{}\n", ep.lambda, ep.residual, ep.min_interior)
}

/// Appends 25-byte records: time f64, id u64, kind u8, site i32 × 2, little-endian.
pub fn write_events(w: &mut impl Write, events: &[Event]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(EVENT_RECORD_LEN * events.len());
    for e in events {
        buf.extend_from_slice(&e.time.to_le_bytes());
        buf.extend_from_slice(&e.id.to_le_bytes());
        buf.push(e.kind as u8);
        buf.extend_from_slice(&e.site[0].to_le_bytes());
        buf.extend_from_slice(&e.site[1].to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_events(r: &mut impl Read) -> Result<Vec<Event>> {
    const WHAT: &str = "event log";
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::format(WHAT, e.to_string()))?;
    if bytes.len() % EVENT_RECORD_LEN != 0 {
        return Err(Error::format(WHAT, format!("length {} is not a multiple of {EVENT_RECORD_LEN}", bytes.len())));
    }
    bytes
        .chunks_exact(EVENT_RECORD_LEN)
        .map(|c| {
            let kind = EventKind::from_code(c[16]).ok_or_else(|| Error::format(WHAT, format!("unknown kind {}", c[16])))?;
            Ok(Event {
                time: f64::from_le_bytes(c[0..8].try_into().unwrap()),
                id: u64::from_le_bytes(c[8..16].try_into().unwrap()),
                kind,
                site: [
                    i32::from_le_bytes(c[17..21].try_into().unwrap()),
                    i32::from_le_bytes(c[21..25].try_into().unwrap()),
                ],
            })
        })
        .collect()
}

pub fn save_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut buf = Vec::new();
    write_events(&mut buf, events).map_err(|e| Error::io(path, e))?;
    write_file(path, &buf)
}

pub fn load_events(path: &Path) -> Result<Vec<Event>> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(&mut f)
}

fn site_str(z: Point, d: usize) -> String {
    multi_index_str(&[z[0] as i64, z[1] as i64], d)
}

/// Measure snapshots as `t,L,site,mass` rows, sites sorted within each `(t, L)`.
pub fn measure_to_csv(path: &EmpiricalMeasurePath, d: usize) -> String {
    let mut out = String::from("t,L,site,mass\n");
    for (t, snap) in path.times.iter().zip(&path.snapshots) {
        for (l, atoms) in path.ls.iter().zip(snap) {
            for (z, m) in atoms {
                writeln!(out, "{t},{l},{},{m}", site_str(*z, d)).unwrap();
            }
        }
    }
    out
}

fn fmt_index(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        p.to_string()
    }
}

/// Norm report rows `quantity,n,L,alpha,p,q,flavor,value,seed`.
pub fn norms_to_csv(rows: &[NormRecord]) -> String {
    let mut out = String::from("quantity,n,L,alpha,p,q,flavor,value,seed\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.quantity,
            r.n,
            r.l,
            r.alpha,
            fmt_index(r.p),
            fmt_index(r.q),
            r.flavor,
            r.value,
            r.seed
        )
        .unwrap();
    }
    out
}

pub fn reports_to_json_lines(reports: &[TestReport]) -> String {
    reports.iter().map(|r| r.to_json_line() + "\n").collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{enhance, sample_noise};
    use crate::spectral::forward_transform;

    #[test]
    fn field_csv_layout() {
        let spec = LatticeSpec::new(2, 2, 1).unwrap();
        let f = Field::from_values(spec, vec![0.0, 0.1, 1e-300, -2.5, 0.0]).unwrap();
        let text = field_to_csv(&f, Flavor::Dirichlet);
        assert!(text.starts_with("n,L,d,flavor\n2,2,1,dirichlet\nindex,value\n0,0\n1,0.1\n"));
        assert_eq!(field_from_csv(&text).unwrap(), (f, Flavor::Dirichlet));
        assert!(field_from_csv("n,L,d,flavor\n2,2,1,weird\n").is_err());
    }

    #[test]
    fn binary_field_layout() {
        let spec = LatticeSpec::new(2, 2, 1).unwrap();
        let f = Field::from_fn(spec, |s, _| s as f64 * 0.3);
        let b = field_to_binary(&f, Flavor::Neumann);
        assert_eq!(b.len(), 29 + 8 * 5);
        assert_eq!(&b[29..37], &0.0f64.to_le_bytes());
        assert_eq!(field_from_binary(&b).unwrap(), (f, Flavor::Neumann));
        assert!(field_from_binary(&b[..40]).is_err());
    }

    #[test]
    fn spectrum_round_trip() {
        let spec = LatticeSpec::new(2, 2, 2).unwrap();
        let f = Field::from_fn(spec, |s, _| (s as f64).sin());
        let c = forward_transform(&f, Flavor::Neumann);
        let text = spectrum_to_csv(&c);
        assert!(text.lines().nth(3).unwrap().starts_with("0:0,"));
        let back = spectrum_from_csv(&text).unwrap();
        assert_eq!(back.coeffs(), c.coeffs());
    }

    #[test]
    fn environment_archive_round_trip() {
        for d in [1, 2] {
            let spec = LatticeSpec::new(4, 2, d).unwrap();
            let env = enhance(sample_noise(&NoiseSpec::new(spec, NoiseDistribution::Uniform, 8))).unwrap();
            let text = environment_to_text(&env);
            assert_eq!(environment_from_text(&text).unwrap(), env);
        }
    }

    #[test]
    fn event_records_are_25_bytes() {
        let ev = vec![
            Event { time: 0.5, id: 3, kind: EventKind::Jump, site: [-1, 2] },
            Event { time: 0.75, id: 9, kind: EventKind::Killed, site: [4, 0] },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &ev).unwrap();
        assert_eq!(buf.len(), 50);
        assert_eq!(buf[16], 0);
        assert_eq!(read_events(&mut buf.as_slice()).unwrap(), ev);
        assert!(read_events(&mut &buf[..30]).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let spec = LatticeSpec::new(2, 2, 1).unwrap();
        let traj = Trajectory {
            times: vec![0.0, 0.125],
            states: vec![Field::zeros(spec), Field::from_values(spec, vec![0.0, 0.5, 1.0 / 3.0, 2.0, 0.0]).unwrap()],
        };
        assert_eq!(trajectory_from_text(&trajectory_to_text(&traj)).unwrap(), traj);
    }

    #[test]
    fn norm_rows_format_infinity() {
        let r = NormRecord {
            quantity: "xi".into(),
            n: 8,
            l: 2,
            alpha: -1.2,
            p: f64::INFINITY,
            q: f64::INFINITY,
            flavor: Flavor::Neumann,
            value: 3.5,
            seed: 1,
        };
        assert_eq!(norms_to_csv(&[r]), "quantity,n,L,alpha,p,q,flavor,value,seed\nxi,8,2,-1.2,inf,inf,neumann,3.5,1\n");
    }
}
