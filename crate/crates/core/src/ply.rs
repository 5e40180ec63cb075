//! Minimal binary little-endian PLY reader/writer for point clouds.

use std::io::{BufRead, Write};

use crate::error::SceneError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

struct VertexLayout {
    count: usize,
    stride: usize,
    /// Byte offset and type of x, y, z.
    xyz: [(usize, Scalar); 3],
}

/// Writes `points` as a binary little-endian PLY with float32 xyz and, when
/// given, uchar rgb per vertex.
pub fn write_ply<W: Write>(
    mut out: W,
    points: &[[f32; 3]],
    colors: Option<&[[u8; 3]]>,
) -> std::io::Result<()> {
    if let Some(c) = colors {
        assert_eq!(c.len(), points.len(), "one color per point");
    }
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        points.len()
    );
    if colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;
    let stride = 12 + if colors.is_some() { 3 } else { 0 };
    let mut buf = Vec::with_capacity(points.len() * stride);
    for (i, p) in points.iter().enumerate() {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(colors) = colors {
            buf.extend_from_slice(&colors[i]);
        }
    }
    out.write_all(&buf)?;
    out.flush()
}

/// Reads vertex positions from a binary little-endian PLY. Extra vertex
/// properties are skipped; elements after the vertices are ignored.
pub fn read_ply<R: BufRead>(mut input: R) -> Result<Vec<[f32; 3]>, SceneError> {
    let layout = read_header(&mut input)?;
    let mut body = vec![0u8; layout.count * layout.stride];
    input
        .read_exact(&mut body)
        .map_err(|_| SceneError::Ply(format!("file ends before {} vertices", layout.count)))?;
    let mut points = Vec::with_capacity(layout.count);
    for rec in body.chunks_exact(layout.stride) {
        let mut p = [0f32; 3];
        for (axis, &(offset, ty)) in layout.xyz.iter().enumerate() {
            p[axis] = match ty {
                Scalar::F32 => f32::from_le_bytes(rec[offset..offset + 4].try_into().unwrap()),
                Scalar::F64 => f64::from_le_bytes(rec[offset..offset + 8].try_into().unwrap()) as f32,
                _ => unreachable!("checked in header"),
            };
        }
        points.push(p);
    }
    Ok(points)
}

fn read_header<R: BufRead>(input: &mut R) -> Result<VertexLayout, SceneError> {
    let mut line = String::new();
    let mut next_line = |input: &mut R| -> Result<String, SceneError> {
        line.clear();
        let n = input
            .read_line(&mut line)
            .map_err(|e| SceneError::Ply(format!("header read failed: {e}")))?;
        if n == 0 {
            return Err(SceneError::Ply("header ends without end_header".into()));
        }
        Ok(line.trim_end().to_string())
    };

    if next_line(input)? != "ply" {
        return Err(SceneError::Ply("missing `ply` magic".into()));
    }
    let mut format_ok = false;
    let mut count = None;
    let mut in_vertex = false;
    let mut seen_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    loop {
        let l = next_line(input)?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(SceneError::Ply(format!("unsupported format {fmt}")));
                }
                format_ok = true;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    if seen_vertex {
                        return Err(SceneError::Ply("duplicate vertex element".into()));
                    }
                    seen_vertex = true;
                    count = Some(
                        n.parse::<usize>()
                            .map_err(|_| SceneError::Ply(format!("bad vertex count {n}")))?,
                    );
                } else if !seen_vertex {
                    return Err(SceneError::Ply("vertex element must come first".into()));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(SceneError::Ply("list properties on vertices are not supported".into()));
            }
            ["property", ty, name] if in_vertex => {
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| SceneError::Ply(format!("unknown property type {ty}")))?;
                props.push((name.to_string(), scalar));
            }
            ["property", ..] => {}
            _ => return Err(SceneError::Ply(format!("unexpected header line `{l}`"))),
        }
    }
    if !format_ok {
        return Err(SceneError::Ply("missing format line".into()));
    }
    let count = count.ok_or_else(|| SceneError::Ply("no vertex element".into()))?;
    let mut offset = 0;
    let mut xyz = [None; 3];
    for (name, ty) in &props {
        let axis = match name.as_str() {
            "x" => Some(0),
            "y" => Some(1),
            "z" => Some(2),
            _ => None,
        };
        if let Some(axis) = axis {
            if !matches!(ty, Scalar::F32 | Scalar::F64) {
                return Err(SceneError::Ply(format!("coordinate {name} must be float or double")));
            }
            xyz[axis] = Some((offset, *ty));
        }
        offset += ty.size();
    }
    let xyz = match xyz {
        [Some(x), Some(y), Some(z)] => [x, y, z],
        _ => return Err(SceneError::Ply("vertex element lacks x, y or z".into())),
    };
    Ok(VertexLayout { count, stride: offset, xyz })
}
