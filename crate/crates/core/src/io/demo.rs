//! Demonstration files: comma-separated `t,x,y,z` plus a unit quaternion per
//! row, preceded by `#`-prefixed `key: value` metadata lines.
//!
//! ```text
//! # format: gplfd-demo v1
//! # frame: task
//! # quaternion: wxyz
//! # aligned: false
//! t,x,y,z,qw,qx,qy,qz
//! 0,0,0,0,1,0,0,0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::alignment::Trajectory;
use crate::error::{io_error, Error, Result};
use crate::se3::{rotvec_from_quaternion, Pose};

pub const DEMO_FORMAT: &str = "gplfd-demo v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuaternionConvention {
    /// Scalar first.
    #[default]
    Wxyz,
    /// Scalar last.
    Xyzw,
}

impl QuaternionConvention {
    pub fn tag(&self) -> &'static str {
        match self {
            QuaternionConvention::Wxyz => "wxyz",
            QuaternionConvention::Xyzw => "xyzw",
        }
    }

    fn columns(&self) -> [&'static str; 8] {
        match self {
            QuaternionConvention::Wxyz => ["t", "x", "y", "z", "qw", "qx", "qy", "qz"],
            QuaternionConvention::Xyzw => ["t", "x", "y", "z", "qx", "qy", "qz", "qw"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemoHeader {
    pub format: String,
    pub frame: String,
    pub convention: QuaternionConvention,
    /// Set on files whose time axis is a normalized `[0, 1]` task clock.
    pub aligned: bool,
}

impl Default for DemoHeader {
    fn default() -> Self {
        Self { format: DEMO_FORMAT.into(), frame: "task".into(), convention: QuaternionConvention::Wxyz, aligned: false }
    }
}

impl DemoHeader {
    pub fn aligned() -> Self {
        Self { aligned: true, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct DemoFile {
    pub header: DemoHeader,
    pub trajectory: Trajectory,
}

pub fn parse_demo(text: &str) -> Result<DemoFile> {
    let mut header = DemoHeader { format: String::new(), ..DemoHeader::default() };
    for (n, line) in text.lines().enumerate() {
        let Some(meta) = line.trim_start().strip_prefix('#') else { continue };
        let Some((key, value)) = meta.split_once(':') else { continue };
        let value = value.trim();
        match key.trim() {
            "format" => header.format = value.to_string(),
            "frame" => header.frame = value.to_string(),
            "quaternion" => {
                header.convention = match value {
                    "wxyz" => QuaternionConvention::Wxyz,
                    "xyzw" => QuaternionConvention::Xyzw,
                    other => {
                        return Err(Error::Parse { line: n + 1, message: format!("unknown quaternion convention '{other}'") })
                    }
                }
            }
            "aligned" => {
                header.aligned = value.parse().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("aligned must be true or false, got '{value}'"),
                })?
            }
            _ => {}
        }
    }
    if header.format != DEMO_FORMAT {
        return Err(Error::Format(format!("expected '# format: {DEMO_FORMAT}', found '{}'", header.format)));
    }

    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let expected = header.convention.columns();
    let columns = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if columns.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "columns '{}' do not match '{}' for quaternion convention {}",
            columns.iter().collect::<Vec<_>>().join(","),
            expected.join(","),
            header.convention.tag()
        )));
    }

    let mut stamps = Vec::new();
    let mut poses = Vec::new();
    let mut previous: Option<f64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fail = |message: String| Error::Parse { line, message };
        let v = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| fail(format!("'{f}' is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(fail("non-finite value".into()));
        }
        if previous.is_some_and(|p| v[0] <= p) {
            return Err(fail(format!("time {} does not increase", v[0])));
        }
        previous = Some(v[0]);
        let q = match header.convention {
            QuaternionConvention::Wxyz => [v[4], v[5], v[6], v[7]],
            QuaternionConvention::Xyzw => [v[7], v[4], v[5], v[6]],
        };
        let rotation = rotvec_from_quaternion(q).map_err(|e| fail(e.to_string()))?;
        stamps.push(v[0]);
        poses.push(Pose::new(Vector3::new(v[1], v[2], v[3]), rotation));
    }
    let trajectory = Trajectory::new(stamps, poses)?;
    Ok(DemoFile { header, trajectory })
}

pub fn read_demo(path: &Path) -> Result<DemoFile> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_demo(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads several demonstration files that must agree on frame and
/// quaternion convention.
pub fn load_demonstrations<P: AsRef<Path>>(paths: &[P]) -> Result<(DemoHeader, Vec<Trajectory>)> {
    let mut header: Option<DemoHeader> = None;
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let file = read_demo(p.as_ref())?;
        if let Some(h) = &header {
            if h.convention != file.header.convention {
                return Err(Error::Format(format!(
                    "{} uses quaternion convention {}, earlier files use {}",
                    p.as_ref().display(),
                    file.header.convention.tag(),
                    h.convention.tag()
                )));
            }
            if h.frame != file.header.frame || h.aligned != file.header.aligned {
                return Err(Error::Format(format!("{} has a different frame or time axis", p.as_ref().display())));
            }
        } else {
            header = Some(file.header.clone());
        }
        out.push(file.trajectory);
    }
    let header = header.ok_or_else(|| Error::InsufficientData("no demonstration files given".into()))?;
    Ok((header, out))
}

pub fn format_demo(traj: &Trajectory, header: &DemoHeader) -> String {
    let mut s = String::new();
    writeln!(s, "# format: {}", header.format).unwrap();
    writeln!(s, "# frame: {}", header.frame).unwrap();
    writeln!(s, "# quaternion: {}", header.convention.tag()).unwrap();
    writeln!(s, "# aligned: {}", header.aligned).unwrap();
    writeln!(s, "{}", header.convention.columns().join(",")).unwrap();
    for (t, p) in traj.stamps().iter().zip(traj.poses()) {
        let [w, x, y, z] = p.rotation.to_quaternion();
        let q = match header.convention {
            QuaternionConvention::Wxyz => [w, x, y, z],
            QuaternionConvention::Xyzw => [x, y, z, w],
        };
        let v = p.position;
        writeln!(s, "{t},{},{},{},{},{},{},{}", v.x, v.y, v.z, q[0], q[1], q[2], q[3]).unwrap();
    }
    s
}

pub fn write_demo(path: &Path, traj: &Trajectory, header: &DemoHeader) -> Result<()> {
    std::fs::write(path, format_demo(traj, header)).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{pose_distance, DistanceWeights, RotationVector};

    const TWO_ROWS: &str = "# format: gplfd-demo v1\n# frame: task\n# quaternion: wxyz\n\
t,x,y,z,qw,qx,qy,qz\n0,0,0,0,1,0,0,0\n0.5,0.1,0.2,0.3,0.7071067811865476,0,0.7071067811865476,0\n";

    #[test]
    fn parses_two_rows() {
        let f = parse_demo(TWO_ROWS).unwrap();
        assert_eq!(f.trajectory.len(), 2);
        assert!(!f.header.aligned);
        let r = f.trajectory.poses()[1].rotation.vector();
        assert!((r.y - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn non_unit_quaternion_names_the_row() {
        let bad = TWO_ROWS.replace("0.5,0.1,0.2,0.3,0.7071067811865476", "0.5,0.1,0.2,0.3,0.9");
        match parse_demo(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let text = TWO_ROWS.replace("0.5,0.1", "0.5,abc");
        assert!(matches!(parse_demo(&text), Err(Error::Parse { line: 6, .. })));
        let short = TWO_ROWS.replace(",0.3,", ",");
        assert!(matches!(parse_demo(&short), Err(Error::Parse { .. })));
        let backwards = TWO_ROWS.replace("0.5,0.1", "0,0.1");
        assert!(matches!(parse_demo(&backwards), Err(Error::Parse { line: 6, .. })));
        assert!(matches!(parse_demo("t,x\n0,1\n"), Err(Error::Format(_))));
        let wrong_columns = TWO_ROWS.replace("quaternion: wxyz", "quaternion: xyzw");
        assert!(matches!(parse_demo(&wrong_columns), Err(Error::Format(_))));
    }

    #[test]
    fn round_trip_both_conventions() {
        let poses: Vec<Pose> = (0..5)
            .map(|i| {
                let a = i as f64 * 0.7;
                Pose::new(
                    Vector3::new(a.sin(), 0.1 * a, -a),
                    RotationVector::from_array([0.3 * a.cos(), -0.2 * a, 0.5]).unwrap(),
                )
            })
            .collect();
        let traj = Trajectory::new(vec![0.0, 0.013, 0.5, 1.25, 3.0], poses).unwrap();
        for convention in [QuaternionConvention::Wxyz, QuaternionConvention::Xyzw] {
            let header = DemoHeader { convention, ..DemoHeader::aligned() };
            let back = parse_demo(&format_demo(&traj, &header)).unwrap();
            assert_eq!(back.header, header);
            assert_eq!(back.trajectory.stamps(), traj.stamps());
            for (a, b) in back.trajectory.poses().iter().zip(traj.poses()) {
                assert!(pose_distance(a, b, &DistanceWeights::default()) <= 1e-12);
            }
        }
    }

    #[test]
    fn mixed_conventions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let traj = parse_demo(TWO_ROWS).unwrap().trajectory;
        write_demo(&a, &traj, &DemoHeader::default()).unwrap();
        let xyzw = DemoHeader { convention: QuaternionConvention::Xyzw, ..DemoHeader::default() };
        write_demo(&b, &traj, &xyzw).unwrap();
        assert!(load_demonstrations(&[&a, &a]).is_ok());
        assert!(matches!(load_demonstrations(&[&a, &b]), Err(Error::Format(_))));
    }
}
