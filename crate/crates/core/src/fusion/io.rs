//! ASCII PLY point clouds, netpbm depth/mask images and JSON view sidecars.
//!
//! A depth view named `<stem>` on disk is three files side by side:
//! `<stem>.json` (intrinsics and camera-to-world pose), `<stem>_depth.pgm`
//! (16-bit raw depth units) and `<stem>_mask.pgm` (0 = ignore, nonzero = keep).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, DepthView, PointCloud};
use crate::files::{self, FileError};
use crate::geometry::{PoseRecord, RigidTransform, Vec3};

pub fn ply_to_string(cloud: &PointCloud) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud.points() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), FileError> {
    files::write_bytes(path, ply_to_string(cloud).as_bytes())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, FileError> {
    let text = files::read_text(path)?;
    parse_ply(&text).map_err(|m| FileError::format(path, m))
}

/// Parses an ASCII PLY whose first element is `vertex` with x, y, z among its
/// scalar properties. Later elements are ignored.
pub fn parse_ply(text: &str) -> Result<PointCloud, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing `ply` magic".into());
    }
    let mut n_vertex = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut ascii = false;
    for line in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", other, ..] => return Err(format!("unsupported PLY format `{other}`")),
            ["element", "vertex", n] => {
                n_vertex = Some(n.parse::<usize>().map_err(|e| format!("bad vertex count: {e}"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => return Err("list properties on vertex are not supported".into()),
            ["property", _ty, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    if !ascii {
        return Err("missing `format ascii 1.0` line".into());
    }
    let n = n_vertex.ok_or("no vertex element")?;
    let col = |name: &str| props.iter().position(|p| p == name).ok_or(format!("vertex has no `{name}` property"));
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let line = lines.next().ok_or(format!("expected {n} vertices, found {i}"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("vertex {i}: {e}"))?;
        if vals.len() != props.len() {
            return Err(format!("vertex {i}: expected {} values, got {}", props.len(), vals.len()));
        }
        points.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
    }
    PointCloud::new(points).map_err(|e| e.to_string())
}

/// A decoded grayscale netpbm image with its raw (unscaled) sample values.
#[derive(Debug, Clone, PartialEq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

/// Decodes P2 (ASCII) or P5 (binary, big-endian when maxval > 255) graymaps.
pub fn parse_pgm(bytes: &[u8]) -> Result<Graymap, String> {
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let binary = match header[0].as_str() {
        "P5" => true,
        "P2" => false,
        m => return Err(format!("unsupported netpbm magic `{m}` (expected P2 or P5)")),
    };
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad PGM {what} `{s}`"));
    let width = num(&header[1], "width")?;
    let height = num(&header[2], "height")?;
    let maxval = num(&header[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("PGM maxval {maxval} out of range"));
    }
    let n = width * height;
    let data: Vec<u16> = if binary {
        pos += 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let body = bytes.get(pos..pos + need).ok_or("truncated PGM pixel data")?;
        if wide {
            body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            body.iter().map(|&b| b as u16).collect()
        }
    } else {
        let text = String::from_utf8_lossy(&bytes[pos..]);
        let vals: Vec<u16> = text
            .split_whitespace()
            .take(n)
            .map(|t| t.parse::<u16>().map_err(|_| format!("bad PGM sample `{t}`")))
            .collect::<Result<_, _>>()?;
        if vals.len() != n {
            return Err("truncated PGM pixel data".into());
        }
        vals
    };
    if let Some(v) = data.iter().find(|&&v| v as usize > maxval) {
        return Err(format!("PGM sample {v} exceeds maxval {maxval}"));
    }
    Ok(Graymap {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

/// Binary P5 encoding; samples are written as 16-bit when `maxval > 255`.
pub fn encode_pgm(g: &Graymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", g.width, g.height, g.maxval).into_bytes();
    if g.maxval > 255 {
        for v in &g.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(g.data.iter().map(|&v| v as u8));
    }
    out
}

pub fn read_pgm(path: &Path) -> Result<Graymap, FileError> {
    parse_pgm(&files::read_bytes(path)?).map_err(|m| FileError::format(path, m))
}

pub fn write_pgm(path: &Path, g: &Graymap) -> Result<(), FileError> {
    files::write_bytes(path, &encode_pgm(g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSidecar {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
    pub pose: PoseRecord,
}

impl ViewSidecar {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            depth_scale: self.depth_scale,
        }
    }
}

/// Paths of the depth and mask images that accompany a sidecar.
pub fn view_image_paths(sidecar: &Path) -> (PathBuf, PathBuf) {
    let stem = sidecar.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = sidecar.parent().unwrap_or_else(|| Path::new(""));
    (
        dir.join(format!("{stem}_depth.pgm")),
        dir.join(format!("{stem}_mask.pgm")),
    )
}

/// Loads a view from its sidecar. `pose_override` replaces the sidecar pose.
pub fn load_view(sidecar_path: &Path, pose_override: Option<RigidTransform>) -> Result<DepthView, FileError> {
    let sidecar: ViewSidecar = files::read_json(sidecar_path)?;
    let pose = match pose_override {
        Some(p) => p,
        None => sidecar
            .pose
            .to_transform()
            .map_err(|e| FileError::format(sidecar_path, e.to_string()))?,
    };
    let (depth_path, mask_path) = view_image_paths(sidecar_path);
    let depth = read_pgm(&depth_path)?;
    let mask = read_pgm(&mask_path)?;
    if (depth.width, depth.height) != (mask.width, mask.height) {
        return Err(FileError::format(
            &mask_path,
            format!(
                "mask is {}x{} but depth is {}x{}",
                mask.width, mask.height, depth.width, depth.height
            ),
        ));
    }
    DepthView::new(
        depth.width,
        depth.height,
        depth.data,
        mask.data.iter().map(|&m| m > 0).collect(),
        sidecar.intrinsics(),
        pose,
    )
    .map_err(|e| FileError::format(sidecar_path, e.to_string()))
}

/// Writes `<dir>/<stem>.json`, `<stem>_depth.pgm` and `<stem>_mask.pgm`.
pub fn save_view(dir: &Path, stem: &str, view: &DepthView) -> Result<PathBuf, FileError> {
    let k = view.intrinsics;
    let sidecar = ViewSidecar {
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        depth_scale: k.depth_scale,
        pose: PoseRecord::from_transform(&view.pose),
    };
    let path = dir.join(format!("{stem}.json"));
    files::write_json(&path, &sidecar)?;
    let (depth_path, mask_path) = view_image_paths(&path);
    write_pgm(
        &depth_path,
        &Graymap {
            width: view.width(),
            height: view.height(),
            maxval: 65535,
            data: view.depth().to_vec(),
        },
    )?;
    write_pgm(
        &mask_path,
        &Graymap {
            width: view.width(),
            height: view.height(),
            maxval: 255,
            data: view.mask().iter().map(|&m| if m { 255 } else { 0 }).collect(),
        },
    )?;
    Ok(path)
}

pub fn read_pose_list(path: &Path) -> Result<Vec<RigidTransform>, FileError> {
    let records: Vec<PoseRecord> = files::read_json(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_transform()
                .map_err(|e| FileError::format(path, format!("pose {i}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_round_trip_is_exact() {
        let cloud = PointCloud::new(vec![Vec3::new(0.1, -2.5e-7, 3.0), Vec3::new(1.0 / 3.0, 0.0, -0.0)]).unwrap();
        let back = parse_ply(&ply_to_string(&cloud)).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float z\nproperty float x\nproperty uchar red\nproperty float y\nend_header\n3 1 255 2\n";
        assert_eq!(parse_ply(text).unwrap().points(), &[Vec3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn ply_truncated_is_error() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n1 2 3\n";
        assert!(parse_ply(text).is_err());
    }

    #[test]
    fn pgm_16bit_round_trip() {
        let g = Graymap {
            width: 3,
            height: 2,
            maxval: 65535,
            data: vec![0, 1, 300, 65535, 4095, 7],
        };
        assert_eq!(parse_pgm(&encode_pgm(&g)).unwrap(), g);
    }

    #[test]
    fn pgm_ascii_keeps_raw_values() {
        let g = parse_pgm(b"P2\n# comment\n2 2\n4095\n0 10\n4095 3\n").unwrap();
        assert_eq!(g.data, vec![0, 10, 4095, 3]);
    }

    #[test]
    fn view_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let k = CameraIntrinsics::new(80.0, 81.0, 2.0, 1.5, 1e-3).unwrap();
        let pose = RigidTransform::from_axis_angle(Vec3::x(), 0.3, Vec3::new(0.0, 0.1, 0.2));
        let view = DepthView::new(4, 3, (0..12).map(|i| 400 + i).collect(), (0..12).map(|i| i % 3 != 0).collect(), k, pose)
            .unwrap();
        let path = save_view(dir.path(), "cam0", &view).unwrap();
        let back = load_view(&path, None).unwrap();
        assert_eq!(back.depth(), view.depth());
        assert_eq!(back.mask(), view.mask());
        assert_eq!(back.intrinsics, k);
        assert!(back.pose.rotation_angle_to(&pose) < 1e-12);
    }

    #[test]
    fn missing_mask_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let k = CameraIntrinsics::new(80.0, 80.0, 1.0, 1.0, 1e-3).unwrap();
        let view = DepthView::new(2, 2, vec![1; 4], vec![true; 4], k, RigidTransform::identity()).unwrap();
        let path = save_view(dir.path(), "v", &view).unwrap();
        std::fs::remove_file(dir.path().join("v_mask.pgm")).unwrap();
        let err = load_view(&path, None).unwrap_err();
        assert!(err.path().ends_with("v_mask.pgm"));
    }
}
