//! Synthetic generator speaking the subprocess protocol, plus a corpus
//! writer for demos and tests.

use std::io::{stdin, stdout, BufWriter};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use prefrank::cohp::{serve_synthetic, SyntheticGenerator, SyntheticModel, DEFAULT_GAIN};
use prefrank::io::{write_jsonl, EmbeddingMatrix, SampleRow};
use prefrank::synth::{random_probe, separable_corpus, SeparableSpec};

#[derive(Parser)]
#[command(name = "prefrank-synthgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer generation requests on stdin until it closes.
    Serve {
        #[arg(long)]
        name: String,
        #[arg(long)]
        quality: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = DEFAULT_GAIN)]
        gain: f64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        probe_seed: u64,
        #[arg(long, default_value_t = 0.0)]
        off_probe_noise: f64,
        /// Embedding file the generated rows are appended to.
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Write a linearly separable corpus (samples, annotations, embeddings).
    Corpus {
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "")]
        id_prefix: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Serve {
            name,
            quality,
            noise,
            gain,
            dim,
            probe_seed,
            off_probe_noise,
            embeddings,
        } => {
            let model = SyntheticModel { name, quality, noise };
            let generator = SyntheticGenerator::new(model, random_probe(dim, probe_seed), gain)?
                .with_off_probe_noise(off_probe_noise);
            serve_synthetic(&generator, &embeddings, stdin().lock(), BufWriter::new(stdout().lock()))?;
        }
        Command::Corpus {
            pairs,
            dim,
            seed,
            id_prefix,
            out,
        } => {
            let spec = SeparableSpec {
                pairs,
                dim,
                seed,
                id_prefix,
                ..SeparableSpec::default()
            };
            let corpus = separable_corpus(&spec);
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            let mut matrix = EmbeddingMatrix::new(dim)?;
            let mut rows = Vec::with_capacity(corpus.samples.len());
            for s in &corpus.samples {
                let row = matrix.push(s.embedding.values())?;
                rows.push(SampleRow::from_sample(s, row));
            }
            matrix.write(out.join("embeddings.prnk"))?;
            write_jsonl(out.join("samples.jsonl"), &rows)?;
            write_jsonl(out.join("annotations.jsonl"), &corpus.records)?;
        }
    }
    Ok(())
}
