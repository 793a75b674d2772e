//! `EPS1` wire protocol between the solver and an out-of-process noise
//! estimator.
//!
//! Every message is a frame: `u32` little-endian body length, then the body.
//!
//! ```text
//! request body : "EPS1" | step u32 | cond_len u32 | cond (UTF-8)
//!                | ndims u32 | dims u32 × ndims | data f32 × Π dims
//! response body: data f32 × Π dims
//! error body   : "EPSE" | UTF-8 message
//! ```
//!
//! All integers and floats are little-endian. A backend that receives a
//! malformed request answers with an error frame and exits with status 5.

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::{Latent, NoiseEstimator};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EPS1";
pub const ERROR_MAGIC: &[u8; 4] = b"EPSE";
pub const PROTOCOL_EXIT_CODE: i32 = 5;
/// Frames above this size are rejected before allocation.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Eps1Request {
    pub step: u32,
    pub condition: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

fn proto(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| proto(format!("truncated {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn numel(dims: &[u32]) -> Option<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
}

impl Eps1Request {
    pub fn from_latent(x: &Latent, step: usize, condition: &str) -> Result<Self> {
        let step = u32::try_from(step).map_err(|_| proto("step exceeds u32"))?;
        Ok(Self {
            step,
            condition: condition.to_owned(),
            dims: x.dims().iter().map(|&d| d as u32).collect(),
            data: x.data().iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn numel(&self) -> usize {
        numel(&self.dims).unwrap_or(usize::MAX)
    }

    pub fn encode(&self) -> Vec<u8> {
        let cond = self.condition.as_bytes();
        let mut out =
            Vec::with_capacity(16 + cond.len() + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(cond.len() as u32).to_le_bytes());
        out.extend_from_slice(cond);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend(self.data.iter().flat_map(|v| v.to_le_bytes()));
        out
    }

    pub fn decode(body: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf: body, pos: 0 };
        if c.take(4, "magic")? != MAGIC {
            return Err(proto("bad magic"));
        }
        let step = c.u32("step")?;
        let cond_len = c.u32("condition length")? as usize;
        let condition = std::str::from_utf8(c.take(cond_len, "condition")?)
            .map_err(|_| proto("condition is not UTF-8"))?
            .to_owned();
        let ndims = c.u32("rank")? as usize;
        if ndims == 0 || ndims > 8 {
            return Err(proto(format!("unsupported rank {ndims}")));
        }
        let dims = (0..ndims)
            .map(|_| c.u32("dims"))
            .collect::<Result<Vec<_>>>()?;
        let n = numel(&dims).ok_or_else(|| proto("tensor too large"))?;
        let raw = c.take(n.checked_mul(4).ok_or_else(|| proto("tensor too large"))?, "tensor")?;
        if c.pos != body.len() {
            return Err(proto("trailing bytes after tensor"));
        }
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self { step, condition, dims, data })
    }
}

pub fn encode_response(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn encode_error(message: &str) -> Vec<u8> {
    let mut out = ERROR_MAGIC.to_vec();
    out.extend_from_slice(message.as_bytes());
    out
}

/// Interprets a response body for a request of `numel` elements.
pub fn decode_response(body: &[u8], numel: usize) -> Result<Vec<f32>> {
    if body.len() != 4 * numel {
        if body.starts_with(ERROR_MAGIC) {
            return Err(Error::Backend(String::from_utf8_lossy(&body[4..]).into_owned()));
        }
        return Err(proto(format!(
            "response holds {} bytes, expected {}",
            body.len(),
            4 * numel
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| proto("frame exceeds u32"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(body)?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any byte.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(proto("truncated frame length")),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(proto(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => proto("truncated frame body"),
        _ => e.into(),
    })?;
    Ok(Some(body))
}

/// Backend-side request loop. Returns `Ok` at end of input. On a malformed
/// request it writes an error frame and returns the protocol error; callers
/// should then exit with [`PROTOCOL_EXIT_CODE`].
pub fn serve<R, W, F>(input: R, output: W, mut handler: F) -> Result<()>
where
    R: Read,
    W: Write,
    F: FnMut(&Eps1Request) -> Result<Vec<f32>>,
{
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    loop {
        let outcome = match read_frame(&mut input) {
            Ok(None) => return Ok(()),
            Ok(Some(body)) => Eps1Request::decode(&body).and_then(|req| {
                let out = handler(&req)?;
                if out.len() != req.numel() {
                    return Err(proto("handler returned wrong element count"));
                }
                Ok(out)
            }),
            Err(e) => Err(e),
        };
        match outcome {
            Ok(data) => write_frame(&mut output, &encode_response(&data))?,
            Err(e) => {
                write_frame(&mut output, &encode_error(&e.to_string()))?;
                output.flush()?;
                return Err(e);
            }
        }
        output.flush()?;
    }
}

struct Pipe {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// Noise estimator served by a spawned `EPS1` backend process. Requests
/// from concurrent callers are serialized over the single pipe.
pub struct ExternalEstimator {
    pipe: Mutex<Pipe>,
}

impl ExternalEstimator {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {program:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
        })
    }

    /// Sends one request and returns the raw response body.
    pub fn round_trip(&self, request: &Eps1Request) -> Result<Vec<u8>> {
        let mut guard = self.pipe.lock().map_err(|_| Error::Backend("backend pipe poisoned".into()))?;
        let pipe = &mut *guard;
        let stdin = pipe
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Backend("backend stdin closed".into()))?;
        let io_err = |e: Error| match e {
            Error::Io(io) => Error::Backend(format!("backend pipe: {io}")),
            other => other,
        };
        write_frame(stdin, &request.encode()).map_err(io_err)?;
        stdin.flush().map_err(|e| io_err(e.into()))?;
        read_frame(&mut pipe.stdout)
            .map_err(io_err)?
            .ok_or_else(|| Error::Backend("backend closed its output".into()))
    }
}

impl NoiseEstimator for ExternalEstimator {
    fn estimate(&self, x: &Latent, step: usize, condition: &str) -> Result<Latent> {
        let req = Eps1Request::from_latent(x, step, condition)?;
        let body = self.round_trip(&req)?;
        let data = decode_response(&body, req.numel())?;
        Latent::new(x.height(), x.width(), data.into_iter().map(f64::from).collect())
    }
}

impl Drop for ExternalEstimator {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            drop(pipe.stdin.take());
            let _ = pipe.child.wait();
        }
    }
}

pub mod conformance {
    //! Golden transcript suite for backends serving the zero estimator.

    use std::io::Write;
    use std::process::{Command, Stdio};

    use serde::Serialize;

    use super::*;

    /// `(name, request frame, response frame)`, each frame including its
    /// length prefix.
    pub const GOLDEN: &[(&str, &[u8], &[u8])] = &[
        (
            "scalar",
            include_bytes!("golden/scalar.req"),
            include_bytes!("golden/scalar.resp"),
        ),
        (
            "block",
            include_bytes!("golden/block.req"),
            include_bytes!("golden/block.resp"),
        ),
        (
            "multibyte-condition",
            include_bytes!("golden/multibyte.req"),
            include_bytes!("golden/multibyte.resp"),
        ),
        (
            "image",
            include_bytes!("golden/image.req"),
            include_bytes!("golden/image.resp"),
        ),
    ];

    #[derive(Debug, Clone, Serialize)]
    pub struct CaseResult {
        pub name: String,
        pub passed: bool,
        pub detail: String,
    }

    #[derive(Debug, Clone, Serialize)]
    pub struct ConformanceReport {
        pub cases: Vec<CaseResult>,
    }

    impl ConformanceReport {
        pub fn failures(&self) -> usize {
            self.cases.iter().filter(|c| !c.passed).count()
        }
    }

    fn exchange(program: &str, args: &[String], input: &[u8]) -> Result<(Vec<u8>, Option<i32>)> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {program:?}: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let payload = input.to_vec();
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let out = child.wait_with_output()?;
        let _ = writer.join();
        Ok((out.stdout, out.status.code()))
    }

    fn case(name: &str, f: impl FnOnce() -> Result<()>) -> CaseResult {
        let outcome = f();
        CaseResult {
            name: name.to_owned(),
            passed: outcome.is_ok(),
            detail: outcome.err().map(|e| e.to_string()).unwrap_or_default(),
        }
    }

    fn expect(cond: bool, msg: &str) -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(proto(msg))
        }
    }

    /// Runs every golden case against a freshly spawned backend, plus
    /// batching, determinism and malformed-header checks.
    pub fn run(program: &str, args: &[String]) -> ConformanceReport {
        let mut cases = Vec::new();
        for (name, req, resp) in GOLDEN {
            cases.push(case(name, || {
                let (out, code) = exchange(program, args, req)?;
                expect(out == *resp, "response differs from golden transcript")?;
                expect(code == Some(0), "backend did not exit cleanly")
            }));
        }
        cases.push(case("framing: pipelined requests", || {
            let input: Vec<u8> = GOLDEN.iter().flat_map(|g| g.1.iter().copied()).collect();
            let expected: Vec<u8> = GOLDEN.iter().flat_map(|g| g.2.iter().copied()).collect();
            let (out, _) = exchange(program, args, &input)?;
            expect(out == expected, "pipelined responses differ")
        }));
        cases.push(case("determinism: repeated request", || {
            let req = GOLDEN[1].1;
            let (out, _) = exchange(program, args, &[req, req].concat())?;
            let mut r = out.as_slice();
            let a = read_frame(&mut r)?.ok_or_else(|| proto("missing first response"))?;
            let b = read_frame(&mut r)?.ok_or_else(|| proto("missing second response"))?;
            expect(a == b, "responses differ")
        }));
        cases.push(case("shape: response matches request dims", || {
            for (_, req, _) in GOLDEN {
                let body = read_frame(&mut &req[..])?.ok_or_else(|| proto("empty golden"))?;
                let parsed = Eps1Request::decode(&body)?;
                let (out, _) = exchange(program, args, req)?;
                let resp = read_frame(&mut out.as_slice())?.ok_or_else(|| proto("no response"))?;
                decode_response(&resp, parsed.numel())?;
            }
            Ok(())
        }));
        cases.push(case("malformed header: error frame and exit 5", || {
            let mut bad = Vec::new();
            write_frame(&mut bad, b"EPS0\0\0\0\0")?;
            let (out, code) = exchange(program, args, &bad)?;
            let body = read_frame(&mut out.as_slice())?.ok_or_else(|| proto("no error frame"))?;
            expect(body.starts_with(ERROR_MAGIC), "response is not an error frame")?;
            expect(code == Some(PROTOCOL_EXIT_CODE), "exit status is not 5")
        }));
        ConformanceReport { cases }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Eps1Request {
        Eps1Request {
            step: 7,
            condition: "a cat".into(),
            dims: vec![1, 2, 2],
            data: vec![0.5, -1.0, 0.0, 2.25],
        }
    }

    #[test]
    fn request_round_trip() {
        let r = sample();
        assert_eq!(Eps1Request::decode(&r.encode()).unwrap(), r);
    }

    #[test]
    fn request_layout() {
        let body = sample().encode();
        assert_eq!(&body[..4], b"EPS1");
        assert_eq!(&body[4..8], &[7, 0, 0, 0]);
        assert_eq!(&body[8..12], &[5, 0, 0, 0]);
        assert_eq!(&body[12..17], b"a cat");
        assert_eq!(&body[17..21], &[3, 0, 0, 0]);
        assert_eq!(body.len(), 21 + 12 + 16);
        assert_eq!(&body[33..37], &0.5f32.to_le_bytes());
    }

    #[test]
    fn decode_rejects_malformed() {
        let good = sample().encode();
        let mut bad_magic = good.clone();
        bad_magic[3] = b'0';
        assert!(Eps1Request::decode(&bad_magic).is_err());
        assert!(Eps1Request::decode(&good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(Eps1Request::decode(&trailing).is_err());
        let mut bad_utf8 = good;
        bad_utf8[12] = 0xff;
        assert!(Eps1Request::decode(&bad_utf8).is_err());
    }

    #[test]
    fn frames_round_trip_and_detect_truncation() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        write_frame(&mut buf, b"").unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"abc");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"");
        assert!(read_frame(&mut r).unwrap().is_none());
        assert!(read_frame(&mut &buf[..5]).is_err());
        assert!(read_frame(&mut &buf[..2]).is_err());
    }

    #[test]
    fn error_frames_surface_as_backend_errors() {
        let body = encode_error("boom");
        assert!(matches!(decode_response(&body, 4), Err(Error::Backend(m)) if m == "boom"));
        assert!(matches!(decode_response(&[0; 3], 1), Err(Error::Protocol(_))));
    }

    #[test]
    fn serve_echoes_zeros_then_stops_on_garbage() {
        let mut input = Vec::new();
        write_frame(&mut input, &sample().encode()).unwrap();
        write_frame(&mut input, b"junk").unwrap();
        write_frame(&mut input, &sample().encode()).unwrap();
        let mut out = Vec::new();
        let res = serve(input.as_slice(), &mut out, |r| Ok(vec![0.0; r.numel()]));
        assert!(matches!(res, Err(Error::Protocol(_))));
        let mut r = out.as_slice();
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), vec![0u8; 16]);
        assert!(read_frame(&mut r).unwrap().unwrap().starts_with(ERROR_MAGIC));
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn golden_requests_decode() {
        for (name, req, resp) in conformance::GOLDEN {
            let body = read_frame(&mut &req[..]).unwrap().unwrap();
            let parsed = Eps1Request::decode(&body).unwrap();
            assert_eq!(parsed.encode(), body, "{name}");
            let out = read_frame(&mut &resp[..]).unwrap().unwrap();
            assert_eq!(decode_response(&out, parsed.numel()).unwrap(), vec![0.0; parsed.numel()]);
        }
    }
}
