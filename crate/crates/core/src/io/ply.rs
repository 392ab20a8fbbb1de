use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::open_err;
use crate::error::{HapError, Result};
use crate::geom::{PointCloud, TriMesh, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Debug, Default)]
struct Table {
    /// Per element: row-major scalar values (lists stored separately).
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    lists: Vec<Vec<usize>>,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

struct Parsed {
    vertex: Table,
    face: Table,
}

fn perr(path: &Path, msg: impl Into<String>) -> HapError {
    HapError::parse(format!("PLY {}", path.display()), msg)
}

fn parse(path: &Path) -> Result<Parsed> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(perr(path, "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(perr(path, "header ended without end_header"));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, _] => return Err(perr(path, format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr(path, format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let (ct, it) = (
                    Scalar::parse(ct).ok_or_else(|| perr(path, format!("unknown type `{ct}`")))?,
                    Scalar::parse(it).ok_or_else(|| perr(path, format!("unknown type `{it}`")))?,
                );
                elements
                    .last_mut()
                    .ok_or_else(|| perr(path, "property before element"))?
                    .props
                    .push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| perr(path, format!("unknown type `{ty}`")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| perr(path, "property before element"))?
                    .props
                    .push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(perr(path, format!("unexpected header line `{}`", line.trim_end()))),
        }
    }
    let format = format.ok_or_else(|| perr(path, "missing format line"))?;

    let mut vertex = Table::default();
    let mut face = Table::default();
    let mut ascii_tokens: Option<std::vec::IntoIter<String>> = None;
    if format == PlyFormat::Ascii {
        let mut rest = String::new();
        r.read_to_string(&mut rest)?;
        ascii_tokens = Some(
            rest.split_whitespace()
                .map(str::to_owned)
                .collect::<Vec<_>>()
                .into_iter(),
        );
    }
    let mut buf = [0u8; 8];
    for el in &elements {
        let mut table = Table {
            columns: el
                .props
                .iter()
                .filter_map(|p| match p {
                    Property::Scalar(n, _) => Some(n.clone()),
                    Property::List(..) => None,
                })
                .collect(),
            ..Default::default()
        };
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(table.columns.len());
            let mut list = Vec::new();
            for p in &el.props {
                match (p, format) {
                    (Property::Scalar(_, ty), PlyFormat::Ascii) => {
                        let v = next_ascii(path, ascii_tokens.as_mut().unwrap())?;
                        // round through f32 so float columns match the binary reader
                        row.push(if *ty == Scalar::F32 { v as f32 as f64 } else { v });
                    }
                    (Property::Scalar(_, ty), PlyFormat::BinaryLittleEndian) => {
                        r.read_exact(&mut buf[..ty.size()]).map_err(|_| perr(path, "truncated body"))?;
                        row.push(ty.read_le(&buf));
                    }
                    (Property::List(name, ct, it), fmt) => {
                        let keep = name == "vertex_indices" || name == "vertex_index";
                        let n = match fmt {
                            PlyFormat::Ascii => next_ascii(path, ascii_tokens.as_mut().unwrap())?,
                            PlyFormat::BinaryLittleEndian => {
                                r.read_exact(&mut buf[..ct.size()]).map_err(|_| perr(path, "truncated body"))?;
                                ct.read_le(&buf)
                            }
                        } as usize;
                        for _ in 0..n {
                            let v = match fmt {
                                PlyFormat::Ascii => next_ascii(path, ascii_tokens.as_mut().unwrap())?,
                                PlyFormat::BinaryLittleEndian => {
                                    r.read_exact(&mut buf[..it.size()]).map_err(|_| perr(path, "truncated body"))?;
                                    it.read_le(&buf)
                                }
                            };
                            if !keep {
                                continue;
                            }
                            if v < 0.0 {
                                return Err(perr(path, "negative list index"));
                            }
                            list.push(v as usize);
                        }
                    }
                }
            }
            table.rows.push(row);
            table.lists.push(list);
        }
        match el.name.as_str() {
            "vertex" => vertex = table,
            "face" => face = table,
            _ => {}
        }
    }
    Ok(Parsed { vertex, face })
}

fn next_ascii(path: &Path, it: &mut std::vec::IntoIter<String>) -> Result<f64> {
    let t = it.next().ok_or_else(|| perr(path, "truncated ASCII body"))?;
    t.parse::<f64>().map_err(|_| perr(path, format!("bad number `{t}`")))
}

fn positions(path: &Path, t: &Table) -> Result<Vec<Vec3>> {
    let (x, y, z) = match (t.column("x"), t.column("y"), t.column("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(perr(path, "vertex element lacks x/y/z")),
    };
    Ok(t.rows.iter().map(|r| Vec3::new(r[x], r[y], r[z])).collect())
}

fn triple(t: &Table, names: [&str; 3]) -> Option<Vec<Vec3>> {
    let c: Vec<usize> = names.iter().map(|n| t.column(n)).collect::<Option<_>>()?;
    Some(t.rows.iter().map(|r| Vec3::new(r[c[0]], r[c[1]], r[c[2]])).collect())
}

pub fn read_ply_cloud(path: &Path) -> Result<PointCloud> {
    let parsed = parse(path)?;
    let t = &parsed.vertex;
    let positions = positions(path, t)?;
    let colors = triple(t, ["red", "green", "blue"]).map(|c| c.into_iter().map(|v| v / 255.0).collect());
    let normals = triple(t, ["nx", "ny", "nz"]);
    let pc = PointCloud {
        positions,
        colors,
        normals,
    };
    // float32 storage perturbs unit normals slightly; renormalize before validating
    let pc = PointCloud {
        normals: pc
            .normals
            .map(|ns| ns.into_iter().map(|n| n.try_normalize(0.0).unwrap_or(n)).collect()),
        ..pc
    };
    pc.validate().map_err(|e| perr(path, e.to_string()))?;
    Ok(pc)
}

pub fn read_ply_mesh(path: &Path) -> Result<TriMesh> {
    let parsed = parse(path)?;
    let vertices = positions(path, &parsed.vertex)?;
    let mut faces = Vec::new();
    for l in &parsed.face.lists {
        if l.len() < 3 {
            return Err(perr(path, "face with fewer than 3 vertices"));
        }
        // fan-triangulate polygons
        for k in 1..l.len() - 1 {
            faces.push([l[0], l[k], l[k + 1]]);
        }
    }
    TriMesh::new(vertices, faces).map_err(|e| perr(path, e.to_string()))
}

fn color_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Positions as float32, optional red/green/blue uint8, optional nx/ny/nz float32.
pub fn write_ply_cloud(path: &Path, pc: &PointCloud, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, format, pc.len(), pc.colors.is_some(), pc.normals.is_some(), None)?;
    for i in 0..pc.len() {
        let p = pc.positions[i];
        let c = pc.colors.as_ref().map(|c| c[i]);
        let n = pc.normals.as_ref().map(|n| n[i]);
        write_vertex(&mut w, format, &p, c.as_ref(), n.as_ref())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ply_mesh(path: &Path, mesh: &TriMesh, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, format, mesh.vertices.len(), false, false, Some(mesh.faces.len()))?;
    for v in &mesh.vertices {
        write_vertex(&mut w, format, v, None, None)?;
    }
    for f in &mesh.faces {
        match format {
            PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?,
            PlyFormat::BinaryLittleEndian => {
                w.write_all(&[3u8])?;
                for &i in f {
                    w.write_all(&(i as i32).to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_header<W: Write>(
    w: &mut W,
    format: PlyFormat,
    n: usize,
    colors: bool,
    normals: bool,
    faces: Option<usize>,
) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(
        w,
        "format {} 1.0",
        match format {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        }
    )?;
    writeln!(w, "element vertex {n}")?;
    for a in ["x", "y", "z"] {
        writeln!(w, "property float {a}")?;
    }
    if colors {
        for a in ["red", "green", "blue"] {
            writeln!(w, "property uchar {a}")?;
        }
    }
    if normals {
        for a in ["nx", "ny", "nz"] {
            writeln!(w, "property float {a}")?;
        }
    }
    if let Some(f) = faces {
        writeln!(w, "element face {f}")?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")?;
    Ok(())
}

fn write_vertex<W: Write>(
    w: &mut W,
    format: PlyFormat,
    p: &Vec3,
    c: Option<&Vec3>,
    n: Option<&Vec3>,
) -> Result<()> {
    match format {
        PlyFormat::Ascii => {
            let mut s = format!("{} {} {}", p.x as f32, p.y as f32, p.z as f32);
            if let Some(c) = c {
                s += &format!(" {} {} {}", color_u8(c.x), color_u8(c.y), color_u8(c.z));
            }
            if let Some(n) = n {
                s += &format!(" {} {} {}", n.x as f32, n.y as f32, n.z as f32);
            }
            writeln!(w, "{s}")?;
        }
        PlyFormat::BinaryLittleEndian => {
            for v in p.iter() {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
            if let Some(c) = c {
                w.write_all(&[color_u8(c.x), color_u8(c.y), color_u8(c.z)])?;
            }
            if let Some(n) = n {
                for v in n.iter() {
                    w.write_all(&(*v as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}
