//! Line-oriented JSON protocol for generators running as child processes.
//!
//! The engine writes one [`GenerationRequestLine`] per call to the child's
//! stdin and reads one [`GenerationResponseLine`] from its stdout. The child
//! appends the generated embeddings to a shared `PRNK` file and answers with
//! the sample ids and row indices.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticGenerator;
use super::{GenerationRequest, GeneratorPort};
use crate::domain::{Category, EmbeddingVector, Prompt, Sample};
use crate::error::{Error, Result};
use crate::io::{append_matrix_rows, read_matrix_rows};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub sample_id: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequestLine {
    pub request_id: String,
    pub prompt_id: String,
    pub prompt_text: String,
    pub category: Category,
    pub reference: Option<ReferenceLine>,
    pub denoise_strength: f64,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub sample_id: String,
    pub embedding_row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GenerationResponseLine {
    #[serde(default)]
    pub samples: Vec<ResponseSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A generator served by a child process.
pub struct SubprocessGenerator {
    name: String,
    embeddings: PathBuf,
    pipe: Mutex<Pipe>,
}

impl SubprocessGenerator {
    /// Starts `command[0]` with the remaining arguments.
    pub fn spawn(name: &str, command: &[String], embeddings: impl Into<PathBuf>) -> Result<Self> {
        let fail = |m: String| Error::Generator {
            generator: name.to_string(),
            message: m,
        };
        let (program, args) = command
            .split_first()
            .ok_or_else(|| fail("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessGenerator {
            name: name.to_string(),
            embeddings: embeddings.into(),
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
        })
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Generator {
            generator: self.name.clone(),
            message: message.into(),
        }
    }
}

impl Drop for SubprocessGenerator {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

impl GeneratorPort for SubprocessGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, req: &GenerationRequest<'_>, rng: &Rng) -> Result<Vec<Sample>> {
        let line = GenerationRequestLine {
            request_id: req.request_id.to_string(),
            prompt_id: req.prompt.prompt_id.clone(),
            prompt_text: req.prompt.prompt_text.clone(),
            category: req.prompt.category,
            reference: req.reference.map(|r| ReferenceLine {
                sample_id: r.sample_id.clone(),
                embedding: r.embedding.values().to_vec(),
            }),
            denoise_strength: req.denoise_strength,
            batch: req.batch,
            seed: rng.substream_named("subprocess").next_u64(),
        };
        let mut text = serde_json::to_string(&line).map_err(|e| self.fail(e.to_string()))?;
        text.push('\n');
        let mut answer = String::new();
        {
            let mut pipe = self.pipe.lock().map_err(|_| self.fail("pipe lock poisoned"))?;
            pipe.stdin
                .write_all(text.as_bytes())
                .and_then(|_| pipe.stdin.flush())
                .map_err(|e| self.fail(format!("write request: {e}")))?;
            let n = pipe
                .stdout
                .read_line(&mut answer)
                .map_err(|e| self.fail(format!("read response: {e}")))?;
            if n == 0 {
                return Err(self.fail("generator closed its output"));
            }
        }
        let resp: GenerationResponseLine =
            serde_json::from_str(&answer).map_err(|e| self.fail(format!("bad response: {e}")))?;
        if let Some(err) = resp.error {
            return Err(self.fail(err));
        }
        resp.samples
            .into_iter()
            .map(|s| {
                let (_, values) = read_matrix_rows(&self.embeddings, s.embedding_row, 1)?;
                Ok(Sample {
                    sample_id: s.sample_id,
                    prompt_id: req.prompt.prompt_id.clone(),
                    prompt_text: req.prompt.prompt_text.clone(),
                    category: req.prompt.category,
                    source: self.name.clone(),
                    embedding: EmbeddingVector::new(values)?,
                    aesthetic_score: None,
                })
            })
            .collect()
    }
}

fn answer_one(generator: &SyntheticGenerator, embeddings: &Path, line: &str) -> Result<GenerationResponseLine> {
    let req: GenerationRequestLine = serde_json::from_str(line)
        .map_err(|e| Error::InvalidArgument(format!("bad request: {e}")))?;
    let prompt = Prompt {
        prompt_id: req.prompt_id.clone(),
        prompt_text: req.prompt_text.clone(),
        category: req.category,
    };
    let reference = match req.reference {
        Some(r) => Some(Sample {
            sample_id: r.sample_id,
            prompt_id: req.prompt_id.clone(),
            prompt_text: req.prompt_text.clone(),
            category: req.category,
            source: String::new(),
            embedding: EmbeddingVector::new(r.embedding)?,
            aesthetic_score: None,
        }),
        None => None,
    };
    let gen_req = GenerationRequest {
        prompt: &prompt,
        reference: reference.as_ref(),
        denoise_strength: req.denoise_strength,
        batch: req.batch,
        request_id: &req.request_id,
    };
    let samples = generator.generate(&gen_req, &Rng::new(req.seed))?;
    let dim = samples.first().map_or(1, |s| s.embedding.dim());
    let rows: Vec<f32> = samples.iter().flat_map(|s| s.embedding.values().to_vec()).collect();
    let first = if samples.is_empty() { 0 } else { append_matrix_rows(embeddings, dim, &rows)? };
    Ok(GenerationResponseLine {
        samples: samples
            .into_iter()
            .enumerate()
            .map(|(i, s)| ResponseSample {
                sample_id: s.sample_id,
                embedding_row: first + i,
            })
            .collect(),
        error: None,
    })
}

/// Serves the protocol for a synthetic model until `input` ends. Request
/// errors are reported on the response line and the loop continues.
pub fn serve_synthetic(
    generator: &SyntheticGenerator,
    embeddings: &Path,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = answer_one(generator, embeddings, &line).unwrap_or_else(|e| GenerationResponseLine {
            samples: Vec::new(),
            error: Some(e.to_string()),
        });
        let text = serde_json::to_string(&resp).expect("response serializes");
        writeln!(output, "{text}")
            .and_then(|_| output.flush())
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}
