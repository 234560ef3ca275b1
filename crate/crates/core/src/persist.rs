//! Binary model files.
//!
//! Layout: the 6-byte magic `CDFAG1`, a `u32` format version, a `u32`
//! section count, then sections of `(4-byte tag, u64 payload length,
//! payload)`. Integers and floats are little-endian; matrices are stored as
//! `u64 rows, u64 cols` followed by row-major `f64` values. Every file has a
//! `KIND` section naming the model type. Encoding is deterministic, so a
//! save/load/save cycle reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::age::{AgeModel, ClassTargets, RangeScaler};
use crate::encoding::{Codebook, PcaModel};
use crate::error::{Error, Result};
use crate::kema::{AlignmentModel, KemaConfig, KernelChoice};
use crate::pipeline::{PipelineConfig, PipelineModel, MODEL_VERSION};
use crate::spectral::{KernelSpec, Symmetrization};
use crate::svm::{BinaryMachine, SvmConfig, SvmModel};

pub const MAGIC: &[u8; 6] = b"CDFAG1";
pub const FORMAT_VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptModel(msg.into())
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn matrix(&mut self, m: &DMatrix<f64>) {
        self.usize(m.nrows());
        self.usize(m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }

    pub fn vector(&mut self, v: &DVector<f64>) {
        self.usize(v.len());
        for x in v.iter() {
            self.f64(*x);
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }

    /// Element count of `rows × cols` doubles, bounded by what remains.
    fn count(&self, rows: usize, cols: usize) -> Result<usize> {
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("matrix size overflow"))?;
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(corrupt("matrix larger than remaining data"));
        }
        Ok(n)
    }

    pub fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = self.count(rows, cols)?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &v))
    }

    pub fn vector(&mut self) -> Result<DVector<f64>> {
        let n = self.usize()?;
        self.count(n, 1)?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(DVector::from_vec(v))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(corrupt("trailing bytes in section"));
        }
        Ok(())
    }
}

/// Tagged sections in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

impl Container {
    pub fn push(&mut self, tag: &[u8; 4], w: Writer) {
        self.sections.push((*tag, w.into_bytes()));
    }

    pub fn get(&self, tag: &[u8; 4]) -> Option<&[u8]> {
        self.sections.iter().find(|s| &s.0 == tag).map(|s| s.1.as_slice())
    }

    pub fn require(&self, tag: &[u8; 4]) -> Result<&[u8]> {
        self.get(tag)
            .ok_or_else(|| corrupt(format!("missing section {}", String::from_utf8_lossy(tag))))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.sections.len() as u32);
        for (tag, payload) in &self.sections {
            w.buf.extend_from_slice(tag);
            w.usize(payload.len());
            w.buf.extend_from_slice(payload);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut r = Reader::new(&bytes[MAGIC.len()..]);
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32()?;
        let mut sections = Vec::new();
        for _ in 0..count {
            let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
            let len = r.usize()?;
            sections.push((tag, r.take(len)?.to_vec()));
        }
        r.finish()?;
        Ok(Container { sections })
    }

    pub fn kind(&self) -> Result<String> {
        let mut r = Reader::new(self.require(b"KIND")?);
        let k = r.str()?;
        r.finish()?;
        Ok(k)
    }

    fn with_kind(kind: &str) -> Self {
        let mut c = Container::default();
        let mut w = Writer::default();
        w.str(kind);
        c.push(b"KIND", w);
        c
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        let found = self.kind()?;
        if found != kind {
            return Err(corrupt(format!("expected a {kind} model, found {found}")));
        }
        Ok(())
    }
}

/// Decodes a whole section with `f`, rejecting trailing bytes.
fn decode<T>(bytes: &[u8], f: impl FnOnce(&mut Reader) -> Result<T>) -> Result<T> {
    let mut r = Reader::new(bytes);
    let v = f(&mut r)?;
    r.finish()?;
    Ok(v)
}

fn section(f: impl FnOnce(&mut Writer)) -> Writer {
    let mut w = Writer::default();
    f(&mut w);
    w
}

fn write_kernel(w: &mut Writer, k: &KernelSpec) {
    match *k {
        KernelSpec::Rbf { bandwidth } => {
            w.u8(0);
            w.f64(bandwidth);
        }
        KernelSpec::Linear => w.u8(1),
    }
}

fn read_kernel(r: &mut Reader) -> Result<KernelSpec> {
    match r.u8()? {
        0 => KernelSpec::rbf(r.f64()?).map_err(|_| corrupt("invalid rbf bandwidth")),
        1 => Ok(KernelSpec::Linear),
        t => Err(corrupt(format!("unknown kernel tag {t}"))),
    }
}

fn write_kema_config(w: &mut Writer, c: &KemaConfig) {
    w.f64(c.mu);
    w.usize(c.latent_dim);
    w.usize(c.knn_k);
    match c.ridge {
        Some(r) => {
            w.u8(1);
            w.f64(r);
        }
        None => w.u8(0),
    }
    match &c.kernel {
        KernelChoice::RbfMedian => w.u8(0),
        KernelChoice::Fixed(k) => {
            w.u8(1);
            write_kernel(w, k);
        }
    }
    w.u8(match c.symmetrization {
        Symmetrization::Union => 0,
        Symmetrization::Mutual => 1,
    });
}

fn read_kema_config(r: &mut Reader) -> Result<KemaConfig> {
    let mu = r.f64()?;
    let latent_dim = r.usize()?;
    let knn_k = r.usize()?;
    let ridge = match r.u8()? {
        0 => None,
        1 => Some(r.f64()?),
        t => return Err(corrupt(format!("bad ridge flag {t}"))),
    };
    let kernel = match r.u8()? {
        0 => KernelChoice::RbfMedian,
        1 => KernelChoice::Fixed(read_kernel(r)?),
        t => return Err(corrupt(format!("bad kernel choice {t}"))),
    };
    let symmetrization = match r.u8()? {
        0 => Symmetrization::Union,
        1 => Symmetrization::Mutual,
        t => return Err(corrupt(format!("bad symmetrization {t}"))),
    };
    Ok(KemaConfig {
        mu,
        latent_dim,
        knn_k,
        ridge,
        kernel,
        symmetrization,
    })
}

fn write_alignment(w: &mut Writer, m: &AlignmentModel) {
    write_kema_config(w, &m.config);
    w.vector(&m.eigenvalues);
    w.usize(m.anchors.len());
    for k in 0..m.anchors.len() {
        write_kernel(w, &m.kernels[k]);
        w.matrix(&m.anchors[k]);
        w.matrix(&m.alphas[k]);
    }
}

fn read_alignment(r: &mut Reader) -> Result<AlignmentModel> {
    let config = read_kema_config(r)?;
    let eigenvalues = r.vector()?;
    let domains = r.usize()?;
    let (mut anchors, mut kernels, mut alphas) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..domains {
        kernels.push(read_kernel(r)?);
        anchors.push(r.matrix()?);
        alphas.push(r.matrix()?);
    }
    let n = eigenvalues.len();
    for (a, x) in alphas.iter().zip(&anchors) {
        if a.ncols() != n || a.nrows() != x.nrows() {
            return Err(corrupt("alignment coefficient block shape"));
        }
    }
    Ok(AlignmentModel {
        anchors,
        kernels,
        alphas,
        eigenvalues,
        config,
    })
}

fn write_pca(w: &mut Writer, m: &PcaModel) {
    w.f64(m.retained_fraction);
    w.vector(&m.mean);
    w.matrix(&m.components);
    w.vector(&m.eigenvalues);
}

fn read_pca(r: &mut Reader) -> Result<PcaModel> {
    let retained_fraction = r.f64()?;
    let mean = r.vector()?;
    let components = r.matrix()?;
    let eigenvalues = r.vector()?;
    if components.ncols() != mean.len() {
        return Err(corrupt("PCA components do not match mean"));
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        retained_fraction,
    })
}

fn write_scaler(w: &mut Writer, s: &RangeScaler) {
    w.f64(s.lo);
    w.f64(s.hi);
    w.vector(&s.min);
    w.vector(&s.max);
}

fn read_scaler(r: &mut Reader) -> Result<RangeScaler> {
    let lo = r.f64()?;
    let hi = r.f64()?;
    let min = r.vector()?;
    let max = r.vector()?;
    if min.len() != max.len() {
        return Err(corrupt("scaler bounds differ in length"));
    }
    Ok(RangeScaler { min, max, lo, hi })
}

fn write_targets(w: &mut Writer, t: &ClassTargets) {
    w.matrix(&t.targets);
    w.usize(t.counts.len());
    for &(s, g) in &t.counts {
        w.usize(s);
        w.usize(g);
    }
}

fn read_targets(r: &mut Reader) -> Result<ClassTargets> {
    let targets = r.matrix()?;
    let n = r.usize()?;
    if n != targets.nrows() {
        return Err(corrupt("class target counts"));
    }
    let counts = (0..n).map(|_| Ok((r.usize()?, r.usize()?))).collect::<Result<_>>()?;
    Ok(ClassTargets { targets, counts })
}

fn write_age(w: &mut Writer, m: &AgeModel) {
    w.matrix(&m.w1);
    w.vector(&m.b1);
    w.matrix(&m.w2);
    w.vector(&m.b2);
}

fn read_age(r: &mut Reader) -> Result<AgeModel> {
    let m = AgeModel {
        w1: r.matrix()?,
        b1: r.vector()?,
        w2: r.matrix()?,
        b2: r.vector()?,
    };
    let (h, l) = m.w1.shape();
    if m.b1.len() != h || m.w2.shape() != (l, h) || m.b2.len() != l {
        return Err(corrupt("encoder weight shapes"));
    }
    Ok(m)
}

fn write_svm(w: &mut Writer, m: &SvmModel) {
    w.f64(m.config.c);
    w.f64(m.config.gamma);
    w.f64(m.config.tolerance);
    w.usize(m.config.max_iter);
    w.usize(m.dim);
    w.usize(m.classes.len());
    for &c in &m.classes {
        w.usize(c);
    }
    w.usize(m.machines.len());
    for mach in &m.machines {
        w.usize(mach.positive);
        w.usize(mach.negative);
        w.f64(mach.bias);
        w.matrix(&mach.support);
        w.vector(&DVector::from_column_slice(&mach.coef));
    }
}

fn read_svm(r: &mut Reader) -> Result<SvmModel> {
    let config = SvmConfig {
        c: r.f64()?,
        gamma: r.f64()?,
        tolerance: r.f64()?,
        max_iter: r.usize()?,
    };
    let dim = r.usize()?;
    let n = r.usize()?;
    let classes = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let n = r.usize()?;
    if n != classes.len() * classes.len().saturating_sub(1) / 2 {
        return Err(corrupt("machine count does not match class count"));
    }
    let mut machines = Vec::with_capacity(n);
    for _ in 0..n {
        let positive = r.usize()?;
        let negative = r.usize()?;
        let bias = r.f64()?;
        let support = r.matrix()?;
        let coef: Vec<f64> = r.vector()?.iter().copied().collect();
        if coef.len() != support.nrows() || (support.nrows() > 0 && support.ncols() != dim) {
            return Err(corrupt("support vector shapes"));
        }
        if !classes.contains(&positive) || !classes.contains(&negative) {
            return Err(corrupt("machine refers to unknown class"));
        }
        machines.push(BinaryMachine {
            positive,
            negative,
            support,
            coef,
            bias,
        });
    }
    Ok(SvmModel {
        classes,
        config,
        machines,
        dim,
    })
}

/// Serialization to and from the tagged container.
pub trait Persist: Sized {
    const KIND: &'static str;
    fn write_sections(&self, c: &mut Container);
    fn read_sections(c: &Container) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut c = Container::with_kind(Self::KIND);
        self.write_sections(&mut c);
        c.to_bytes()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::from_bytes(bytes)?;
        c.expect_kind(Self::KIND)?;
        Self::read_sections(&c)
    }
}

impl Persist for PipelineModel {
    const KIND: &'static str = "pipeline";

    fn write_sections(&self, c: &mut Container) {
        c.push(b"VERS", section(|w| w.u32(self.version)));
        c.push(b"CONF", section(|w| w.str(&self.config.to_text())));
        for (k, tag) in [b"PCA0", b"PCA1"].iter().enumerate() {
            if let Some(p) = &self.pca[k] {
                c.push(tag, section(|w| write_pca(w, p)));
            }
        }
        c.push(b"ALGN", section(|w| write_alignment(w, &self.alignment)));
        c.push(b"SCAL", section(|w| write_scaler(w, &self.scaler)));
        c.push(b"TGTS", section(|w| write_targets(w, &self.targets)));
        c.push(b"ENCS", section(|w| write_age(w, &self.source_encoder)));
        c.push(b"ENCT", section(|w| write_age(w, &self.target_encoder)));
        c.push(b"SVMM", section(|w| write_svm(w, &self.svm)));
    }

    fn read_sections(c: &Container) -> Result<Self> {
        let version = decode(c.require(b"VERS")?, |r| r.u32())?;
        if version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let text = decode(c.require(b"CONF")?, |r| r.str())?;
        let config = PipelineConfig::parse(&text).map_err(|e| corrupt(format!("stored config: {e}")))?;
        let pca = [b"PCA0", b"PCA1"]
            .iter()
            .map(|tag| c.get(tag).map(|b| decode(b, read_pca)).transpose())
            .collect::<Result<Vec<_>>>()?;
        let model = PipelineModel {
            version,
            pca,
            alignment: decode(c.require(b"ALGN")?, read_alignment)?,
            scaler: decode(c.require(b"SCAL")?, read_scaler)?,
            targets: decode(c.require(b"TGTS")?, read_targets)?,
            source_encoder: decode(c.require(b"ENCS")?, read_age)?,
            target_encoder: decode(c.require(b"ENCT")?, read_age)?,
            svm: decode(c.require(b"SVMM")?, read_svm)?,
            config,
        };
        model.validate_chain()?;
        Ok(model)
    }
}

impl Persist for AlignmentModel {
    const KIND: &'static str = "align";

    fn write_sections(&self, c: &mut Container) {
        c.push(b"ALGN", section(|w| write_alignment(w, self)));
    }

    fn read_sections(c: &Container) -> Result<Self> {
        decode(c.require(b"ALGN")?, read_alignment)
    }
}

impl Persist for PcaModel {
    const KIND: &'static str = "pca";

    fn write_sections(&self, c: &mut Container) {
        c.push(b"PCA0", section(|w| write_pca(w, self)));
    }

    fn read_sections(c: &Container) -> Result<Self> {
        decode(c.require(b"PCA0")?, read_pca)
    }
}

impl Persist for Codebook {
    const KIND: &'static str = "codebook";

    fn write_sections(&self, c: &mut Container) {
        c.push(b"BASE", section(|w| w.matrix(&self.bases)));
    }

    fn read_sections(c: &Container) -> Result<Self> {
        Ok(Codebook {
            bases: decode(c.require(b"BASE")?, |r| r.matrix())?,
        })
    }
}

impl Persist for SvmModel {
    const KIND: &'static str = "svm";

    fn write_sections(&self, c: &mut Container) {
        c.push(b"SVMM", section(|w| write_svm(w, self)));
    }

    fn read_sections(c: &Container) -> Result<Self> {
        decode(c.require(b"SVMM")?, read_svm)
    }
}

/// Standalone encoder training output: the scaler, class targets and both
/// encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBundle {
    pub scaler: RangeScaler,
    pub targets: ClassTargets,
    pub source: AgeModel,
    pub target: AgeModel,
}

impl Persist for EncoderBundle {
    const KIND: &'static str = "age";

    fn write_sections(&self, c: &mut Container) {
        c.push(b"SCAL", section(|w| write_scaler(w, &self.scaler)));
        c.push(b"TGTS", section(|w| write_targets(w, &self.targets)));
        c.push(b"ENCS", section(|w| write_age(w, &self.source)));
        c.push(b"ENCT", section(|w| write_age(w, &self.target)));
    }

    fn read_sections(c: &Container) -> Result<Self> {
        Ok(EncoderBundle {
            scaler: decode(c.require(b"SCAL")?, read_scaler)?,
            targets: decode(c.require(b"TGTS")?, read_targets)?,
            source: decode(c.require(b"ENCS")?, read_age)?,
            target: decode(c.require(b"ENCT")?, read_age)?,
        })
    }
}

pub fn save_model<T: Persist>(model: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_model<T: Persist>(path: impl AsRef<Path>) -> Result<T> {
    T::from_bytes(&fs::read(path)?)
}

/// The `KIND` of a model file without decoding the rest.
pub fn model_kind(path: impl AsRef<Path>) -> Result<String> {
    Container::from_bytes(&fs::read(path)?)?.kind()
}
