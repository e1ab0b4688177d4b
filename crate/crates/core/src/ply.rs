//! Binary little-endian PLY storage for neural point clouds.
//!
//! Layout:
//!
//! ```text
//! ply
//! format binary_little_endian 1.0
//! comment sh_degree <L>
//! comment k_agg <k>
//! comment r_agg <radius, shortest round-trip decimal>
//! element vertex <N>
//! property double x
//! property double y
//! property double z
//! property double density
//! property double confidence
//! property uchar group            (0 = character, 1 = background)
//! property double sh_0
//! ...
//! property double sh_<3B-1>       (channel major: R bands, G bands, B bands)
//! end_header
//! ```
//!
//! followed by `N` records of `8 * (5 + 3B) + 1` bytes each in property
//! order. Clouds written without `r_agg`/`k_agg` comments get the defaults
//! on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::geom::Vec3;
use crate::points::{Group, NeuralPointCloud, PointsError, DEFAULT_K_AGG, DEFAULT_R_AGG_FACTOR};
use crate::sh;

const SCALAR_PROPS: [&str; 5] = ["x", "y", "z", "density", "confidence"];

fn format_err(location: impl Into<String>, message: impl Into<String>) -> PointsError {
    PointsError::Format { location: location.into(), message: message.into() }
}

pub fn write_cloud(cloud: &NeuralPointCloud, out: &mut impl Write) -> Result<(), PointsError> {
    cloud.validate()?;
    let ncoef = cloud.coeffs_per_point();
    writeln!(out, "ply")?;
    writeln!(out, "format binary_little_endian 1.0")?;
    writeln!(out, "comment sh_degree {}", cloud.sh_degree())?;
    writeln!(out, "comment k_agg {}", cloud.k_agg)?;
    writeln!(out, "comment r_agg {:?}", cloud.r_agg)?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for p in &SCALAR_PROPS[..] {
        writeln!(out, "property double {p}")?;
    }
    writeln!(out, "property uchar group")?;
    for i in 0..ncoef {
        writeln!(out, "property double sh_{i}")?;
    }
    writeln!(out, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        for v in [p.x, p.y, p.z, cloud.density[i], cloud.confidence[i]] {
            out.write_f64::<LittleEndian>(v)?;
        }
        out.write_u8(cloud.groups[i].as_u8())?;
        for &c in cloud.sh_of(i) {
            out.write_f64::<LittleEndian>(c)?;
        }
    }
    Ok(())
}

pub fn save_cloud(cloud: &NeuralPointCloud, path: &Path) -> Result<(), PointsError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cloud(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_cloud(path: &Path) -> Result<NeuralPointCloud, PointsError> {
    read_cloud(&mut BufReader::new(File::open(path)?))
}

pub fn read_cloud(input: &mut impl BufRead) -> Result<NeuralPointCloud, PointsError> {
    let mut line_no = 0usize;
    let mut offset = 0usize;
    let mut next_line = |input: &mut dyn BufRead| -> Result<(usize, String), PointsError> {
        let mut buf = Vec::new();
        let n = input.read_until(b'\n', &mut buf)?;
        line_no += 1;
        offset += n;
        if n == 0 || buf.last() != Some(&b'\n') {
            return Err(format_err(format!("header line {line_no}"), "unexpected end of header"));
        }
        let s = String::from_utf8(buf)
            .map_err(|_| format_err(format!("header line {line_no}"), "header is not UTF-8"))?;
        Ok((line_no, s.trim_end_matches(['\n', '\r']).to_string()))
    };

    let (l, magic) = next_line(input)?;
    if magic != "ply" {
        return Err(format_err(format!("header line {l}"), "missing 'ply' magic"));
    }
    let mut degree: Option<usize> = None;
    let mut k_agg: Option<usize> = None;
    let mut r_agg: Option<f64> = None;
    let mut count: Option<usize> = None;
    let mut props: Vec<(usize, String, String)> = Vec::new();
    let mut format_ok = false;
    loop {
        let (l, line) = next_line(input)?;
        let loc = format!("header line {l}");
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", other, ..] => {
                return Err(format_err(loc, format!("unsupported format '{other}'")));
            }
            ["comment", "sh_degree", v] => {
                degree = Some(v.parse().map_err(|_| format_err(&loc, "bad sh_degree"))?);
            }
            ["comment", "k_agg", v] => {
                k_agg = Some(v.parse().map_err(|_| format_err(&loc, "bad k_agg"))?);
            }
            ["comment", "r_agg", v] => {
                r_agg = Some(v.parse().map_err(|_| format_err(&loc, "bad r_agg"))?);
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(format_err(loc, "duplicate vertex element"));
                }
                count = Some(n.parse().map_err(|_| format_err(&loc, "bad vertex count"))?);
            }
            ["element", other, ..] => {
                return Err(format_err(loc, format!("unexpected element '{other}'")));
            }
            ["property", ty, name] => {
                if count.is_none() {
                    return Err(format_err(loc, "property before element"));
                }
                props.push((l, ty.to_string(), name.to_string()));
            }
            _ => return Err(format_err(loc, format!("unrecognized header line '{line}'"))),
        }
    }
    if !format_ok {
        return Err(format_err("header", "missing binary_little_endian format line"));
    }
    let count = count.ok_or_else(|| format_err("header", "missing vertex element"))?;

    let n_sh = props.len().saturating_sub(SCALAR_PROPS.len() + 1);
    if n_sh == 0 {
        return Err(format_err("header", "cloud has no SH coefficient properties"));
    }
    let degree = match degree {
        Some(d) => d,
        None => (0..=sh::MAX_DEGREE)
            .find(|&d| 3 * sh::basis_count(d) == n_sh)
            .ok_or_else(|| format_err("header", format!("{n_sh} SH properties match no degree")))?,
    };
    if degree > sh::MAX_DEGREE {
        return Err(format_err("header", format!("SH degree {degree} is not supported")));
    }
    let ncoef = 3 * sh::basis_count(degree);
    let expected: Vec<(&str, String)> = SCALAR_PROPS
        .iter()
        .map(|p| ("double", p.to_string()))
        .chain(std::iter::once(("uchar", "group".to_string())))
        .chain((0..ncoef).map(|i| ("double", format!("sh_{i}"))))
        .collect();
    if props.len() != expected.len() {
        return Err(format_err(
            "header",
            format!("expected {} properties for SH degree {degree}, found {}", expected.len(), props.len()),
        ));
    }
    for ((l, ty, name), (ety, ename)) in props.iter().zip(&expected) {
        if ty != ety || name != ename {
            return Err(format_err(
                format!("header line {l}"),
                format!("expected 'property {ety} {ename}', found 'property {ty} {name}'"),
            ));
        }
    }

    let record = 8 * (SCALAR_PROPS.len() + ncoef) + 1;
    let mut cloud = NeuralPointCloud::empty(degree);
    cloud.positions.reserve(count);
    cloud.sh.reserve(count * ncoef);
    let mut buf = vec![0u8; record];
    for i in 0..count {
        input.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => format_err(
                format!("byte offset {}", offset + i * record),
                format!("truncated body: vertex {i} of {count} is incomplete"),
            ),
            _ => PointsError::Io(e),
        })?;
        let mut r = &buf[..];
        let mut next = || r.read_f64::<LittleEndian>().expect("record sized");
        let (x, y, z, d, c) = (next(), next(), next(), next(), next());
        let g = buf[8 * SCALAR_PROPS.len()];
        let mut r = &buf[8 * SCALAR_PROPS.len() + 1..];
        cloud.positions.push(Vec3::new(x, y, z));
        cloud.density.push(d);
        cloud.confidence.push(c);
        cloud.groups.push(Group::from_u8(g).ok_or_else(|| {
            format_err(
                format!("byte offset {}", offset + i * record + 8 * SCALAR_PROPS.len()),
                format!("invalid group label {g}"),
            )
        })?);
        for _ in 0..ncoef {
            cloud.sh.push(r.read_f64::<LittleEndian>().expect("record sized"));
        }
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(format_err(
            format!("byte offset {}", offset + count * record),
            "trailing bytes after last vertex",
        ));
    }
    cloud.k_agg = k_agg.unwrap_or(DEFAULT_K_AGG);
    cloud.r_agg = match r_agg {
        Some(r) => r,
        None => cloud.default_r_agg(DEFAULT_R_AGG_FACTOR),
    };
    if cloud.is_empty() {
        return Err(PointsError::Invalid("point cloud file has no vertices".into()));
    }
    cloud.validate()?;
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::NeuralPoint;
    use proptest::prelude::*;

    fn sample_cloud(degree: usize, n: usize, seed: u64) -> NeuralPointCloud {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = sh::basis_count(degree);
        let pts: Vec<NeuralPoint> = (0..n)
            .map(|i| NeuralPoint {
                position: Vec3::new(rng.random(), rng.random::<f64>() * 1e3, -rng.random::<f64>()),
                sh: (0..3 * b).map(|_| rng.random::<f64>() - 0.5).collect(),
                density: rng.random::<f64>() * 50.0,
                confidence: rng.random(),
                group: if i % 3 == 0 { Group::Background } else { Group::Character },
            })
            .collect();
        NeuralPointCloud::from_points(degree, pts).unwrap()
    }

    fn roundtrip(cloud: &NeuralPointCloud) -> Vec<u8> {
        let mut bytes = Vec::new();
        write_cloud(cloud, &mut bytes).unwrap();
        bytes
    }

    #[test]
    fn header_layout() {
        let bytes = roundtrip(&sample_cloud(0, 2, 1));
        let text = String::from_utf8_lossy(&bytes);
        let header: Vec<&str> = text.split("end_header\n").next().unwrap().lines().collect();
        assert_eq!(header[0], "ply");
        assert_eq!(header[1], "format binary_little_endian 1.0");
        assert_eq!(header[2], "comment sh_degree 0");
        assert!(header.contains(&"property uchar group"));
        assert!(header.contains(&"property double sh_2"));
        let body = bytes.len() - (text.find("end_header\n").unwrap() + "end_header\n".len());
        assert_eq!(body, 2 * (8 * 8 + 1));
    }

    #[test]
    fn truncated_body_reports_offset() {
        let bytes = roundtrip(&sample_cloud(2, 5, 2));
        let cut = &bytes[..bytes.len() - 7];
        match read_cloud(&mut &cut[..]) {
            Err(PointsError::Format { location, message }) => {
                assert!(location.starts_with("byte offset"), "{location}");
                assert!(message.contains("vertex 4"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_header() {
        let bytes = roundtrip(&sample_cloud(1, 1, 2));
        let cut = &bytes[..40];
        assert!(matches!(read_cloud(&mut &cut[..]), Err(PointsError::Format { .. })));
    }

    #[test]
    fn rejects_cloud_without_sh() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty double x\nproperty double y\n\
                    property double z\nproperty double density\nproperty double confidence\nproperty uchar group\nend_header\n";
        match read_cloud(&mut text.as_bytes()) {
            Err(PointsError::Format { message, .. }) => assert!(message.contains("no SH")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_property_order() {
        let bytes = roundtrip(&sample_cloud(0, 1, 3));
        let text = String::from_utf8_lossy(&bytes).replace("property double density\nproperty double confidence",
                                                           "property double confidence\nproperty double density");
        let err = read_cloud(&mut text.as_bytes()).unwrap_err();
        assert!(matches!(err, PointsError::Format { ref location, .. } if location.starts_with("header line")));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = sample_cloud(3, 40, 9);
        save_cloud(&cloud, &path).unwrap();
        assert_eq!(load_cloud(&path).unwrap(), cloud);
        assert!(matches!(load_cloud(&dir.path().join("missing.ply")), Err(PointsError::Io(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_field_exact(degree in 0usize..=3, n in 1usize..30, seed in 0u64..1000) {
            let cloud = sample_cloud(degree, n, seed);
            let bytes = roundtrip(&cloud);
            let back = read_cloud(&mut &bytes[..]).unwrap();
            prop_assert_eq!(&back, &cloud);
            prop_assert_eq!(roundtrip(&back), bytes);
        }
    }
}
