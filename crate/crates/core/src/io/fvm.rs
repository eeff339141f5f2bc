//! FVM1 model containers.
//!
//! Layout: magic `FVM1`, version u32 (= 1), record count u32, then per record
//! a 4-byte tag, a u64 payload length and the payload. All integers are
//! little-endian; all reals are f64 LE, so models reload bit for bit.
//! "vec" below means a u64 length followed by that many f64 values.
//!
//! `pca `: input_dim u32, output_dim u32, whitened u32 (always 0),
//! mean vec, basis vec (row-major `output_dim x input_dim`), variances vec.
//!
//! `gmm `: k u32, dim u32, seed u64, weight floor f64, variance floor f64,
//! weights vec, means vec (row-major `k x dim`), stddevs vec.
//!
//! `net `: input height, width, channels u32; num_classes u32; layer count
//! u32, then per layer a kind byte and three u32 fields:
//! conv = 0 (kernel, stride, out_channels), pool = 1 (kernel, stride, 0),
//! fc = 2 (out, 0, 0); head count u32, then per head attach layer u32 and
//! aux channels u32; block count u32, then per parameter block (trunk layers,
//! score layer, each head's conv and score layers) a weights vec and a bias vec.
//!
//! `svm `: num_classes u32, dim u32, C f64, weights vec (row-major
//! `num_classes x dim`), biases vec.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::nn::{ConvNet, ConvNetSpec, LayerSpec, LcsHeadSpec, Shape};
use crate::pca::PcaModel;
use crate::svm::SvmModel;

const MAGIC: &[u8; 4] = b"FVM1";
const FORMAT: &str = "FVM1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Pca(PcaModel),
    Gmm(GmmModel),
    Net(ConvNet),
    Svm(SvmModel),
}

impl Record {
    pub fn tag(&self) -> &'static [u8; 4] {
        match self {
            Record::Pca(_) => b"pca ",
            Record::Gmm(_) => b"gmm ",
            Record::Net(_) => b"net ",
            Record::Svm(_) => b"svm ",
        }
    }
}

fn encode_pca(m: &PcaModel, w: &mut Writer) -> Result<()> {
    w.u32(m.input_dim())?;
    w.u32(m.output_dim())?;
    w.u32(m.whitened() as usize)?;
    w.f64_vec(m.mean());
    w.f64_vec(m.basis());
    w.f64_vec(m.explained_variance());
    Ok(())
}

fn decode_pca(r: &mut Reader) -> Result<PcaModel> {
    let input_dim = r.usize32()?;
    let output_dim = r.usize32()?;
    let whitened = r.u32()? != 0;
    let mean = r.f64_vec()?;
    let basis = r.f64_vec()?;
    let var = r.f64_vec()?;
    PcaModel::from_parts(input_dim, output_dim, mean, basis, var, whitened)
}

fn encode_gmm(m: &GmmModel, w: &mut Writer) -> Result<()> {
    w.u32(m.k())?;
    w.u32(m.dim())?;
    w.u64(m.seed());
    w.f64(m.weight_floor());
    w.f64(m.variance_floor());
    w.f64_vec(m.weights());
    w.f64_vec(m.means());
    w.f64_vec(m.stddevs());
    Ok(())
}

fn decode_gmm(r: &mut Reader) -> Result<GmmModel> {
    let k = r.usize32()?;
    let dim = r.usize32()?;
    let seed = r.u64()?;
    let weight_floor = r.f64()?;
    let variance_floor = r.f64()?;
    let weights = r.f64_vec()?;
    let means = r.f64_vec()?;
    let stddevs = r.f64_vec()?;
    GmmModel::from_parts(k, dim, weights, means, stddevs, weight_floor, variance_floor, seed)
}

fn encode_net(net: &ConvNet, w: &mut Writer) -> Result<()> {
    let spec = net.spec();
    w.u32(spec.input.height)?;
    w.u32(spec.input.width)?;
    w.u32(spec.input.channels)?;
    w.u32(spec.num_classes)?;
    w.u32(spec.layers.len())?;
    for layer in &spec.layers {
        let (kind, a, b, c) = match *layer {
            LayerSpec::Conv {
                kernel,
                stride,
                out_channels,
            } => (0, kernel, stride, out_channels),
            LayerSpec::MaxPool { kernel, stride } => (1, kernel, stride, 0),
            LayerSpec::FullyConnected { out } => (2, out, 0, 0),
        };
        w.u8(kind);
        w.u32(a)?;
        w.u32(b)?;
        w.u32(c)?;
    }
    w.u32(net.heads().len())?;
    for h in net.heads() {
        w.u32(h.attach_layer)?;
        w.u32(h.aux_channels)?;
    }
    let blocks = net.params().blocks();
    w.u32(blocks.len())?;
    for (_, d) in blocks {
        w.f64_vec(&d.weights);
        w.f64_vec(&d.bias);
    }
    Ok(())
}

fn decode_net(r: &mut Reader) -> Result<ConvNet> {
    let input = Shape::new(r.usize32()?, r.usize32()?, r.usize32()?);
    let num_classes = r.usize32()?;
    let n_layers = r.usize32()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let (a, b, c) = (r.usize32()?, r.usize32()?, r.usize32()?);
        layers.push(match kind {
            0 => LayerSpec::Conv {
                kernel: a,
                stride: b,
                out_channels: c,
            },
            1 => LayerSpec::MaxPool { kernel: a, stride: b },
            2 => LayerSpec::FullyConnected { out: a },
            k => return Err(Error::format(FORMAT, format!("unknown layer kind {k}"))),
        });
    }
    let n_heads = r.usize32()?;
    let mut heads = Vec::new();
    for _ in 0..n_heads {
        heads.push(LcsHeadSpec::new(r.usize32()?, r.usize32()?));
    }
    let spec = ConvNetSpec {
        input,
        layers,
        num_classes,
    };
    let mut template = ConvNet::zeros(spec.clone(), heads.clone())?;
    let mut params = template.params_mut().clone();
    let n_blocks = r.usize32()?;
    let mut blocks = params.blocks_mut();
    if n_blocks != blocks.len() {
        return Err(Error::format(
            FORMAT,
            format!("net record has {n_blocks} parameter blocks, architecture needs {}", blocks.len()),
        ));
    }
    for block in blocks.iter_mut() {
        block.weights = r.f64_vec()?;
        block.bias = r.f64_vec()?;
    }
    ConvNet::from_params(spec, heads, params)
}

fn encode_svm(m: &SvmModel, w: &mut Writer) -> Result<()> {
    w.u32(m.num_classes())?;
    w.u32(m.dim())?;
    w.f64(m.c());
    w.f64_vec(m.weights());
    w.f64_vec(m.biases());
    Ok(())
}

fn decode_svm(r: &mut Reader) -> Result<SvmModel> {
    let nc = r.usize32()?;
    let dim = r.usize32()?;
    let c = r.f64()?;
    let weights = r.f64_vec()?;
    let biases = r.f64_vec()?;
    SvmModel::from_parts(nc, dim, c, weights, biases)
}

pub fn write_fvm<W: Write>(mut out: W, records: &[Record]) -> Result<()> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION as usize)?;
    w.u32(records.len())?;
    for rec in records {
        let mut payload = Writer::default();
        match rec {
            Record::Pca(m) => encode_pca(m, &mut payload)?,
            Record::Gmm(m) => encode_gmm(m, &mut payload)?,
            Record::Net(m) => encode_net(m, &mut payload)?,
            Record::Svm(m) => encode_svm(m, &mut payload)?,
        }
        w.buf.extend_from_slice(rec.tag());
        w.u64(payload.buf.len() as u64);
        w.buf.extend_from_slice(&payload.buf);
    }
    out.write_all(&w.buf)?;
    Ok(())
}

pub fn read_fvm<R: Read>(mut input: R) -> Result<Vec<Record>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut r = Reader::new(&buf, FORMAT);
    if r.take(4)? != MAGIC {
        return Err(Error::format(FORMAT, "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(FORMAT, format!("unsupported version {version}")));
    }
    let count = r.usize32()?;
    let mut records = Vec::new();
    for _ in 0..count {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u64()?;
        if len > r.remaining() as u64 {
            return Err(Error::format(FORMAT, format!("record length {len} exceeds file")));
        }
        let mut p = Reader::new(r.take(len as usize)?, FORMAT);
        let rec = match &tag {
            b"pca " => Record::Pca(decode_pca(&mut p)?),
            b"gmm " => Record::Gmm(decode_gmm(&mut p)?),
            b"net " => Record::Net(decode_net(&mut p)?),
            b"svm " => Record::Svm(decode_svm(&mut p)?),
            other => {
                return Err(Error::format(
                    FORMAT,
                    format!("unknown record tag {:?}", String::from_utf8_lossy(other)),
                ))
            }
        };
        p.finish()?;
        records.push(rec);
    }
    r.finish()?;
    Ok(records)
}

pub fn save_fvm(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let mut buf = Vec::new();
    write_fvm(&mut buf, records)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_fvm(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    read_fvm(fs::File::open(path)?)
}

macro_rules! single {
    ($name:ident, $variant:ident, $ty:ty, $what:literal) => {
        /// Loads a container and returns its only record of this type.
        pub fn $name(path: impl AsRef<Path>) -> Result<$ty> {
            let mut found = load_fvm(path)?.into_iter().filter_map(|r| match r {
                Record::$variant(m) => Some(m),
                _ => None,
            });
            match (found.next(), found.next()) {
                (Some(m), None) => Ok(m),
                (None, _) => Err(Error::format(FORMAT, concat!("no ", $what, " record"))),
                _ => Err(Error::format(FORMAT, concat!("more than one ", $what, " record"))),
            }
        }
    };
}

single!(load_pca, Pca, PcaModel, "pca");
single!(load_gmm, Gmm, GmmModel, "gmm");
single!(load_net, Net, ConvNet, "net");
single!(load_svm, Svm, SvmModel, "svm");
