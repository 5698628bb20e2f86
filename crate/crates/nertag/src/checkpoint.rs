//! Versioned binary checkpoints.
//!
//! The format is little-endian and exact: every parameter is stored as raw
//! f64 bits, so a load reproduces the saved model bit for bit. The file
//! carries the full configuration, the vocabulary, and every parameter
//! block, making a checkpoint self-contained for tagging.
//!
//! Layout (version 1): magic, version, config, vocabulary, word-row map,
//! then the parameter blocks in visitor order. Matrices and vectors are
//! length-prefixed; optional blocks (POS table, CRF) carry a presence
//! byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use nertag_core::corpus::Vocab;
use nertag_core::embeddings::{C2wParams, EmbeddingTable};
use nertag_core::heads::{CrfParams, Head, HiddenParams};
use nertag_core::lstm::LstmParams;
use nertag_core::training::{Dims, Model, ModelConfig};
use nertag_core::Mat;

const MAGIC: [u8; 8] = *b"NERTAGCK";
const VERSION: u32 = 1;

pub fn save(path: &Path, model: &Model, vocab: &Vocab) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("creating checkpoint {}", path.display()))?;
    let mut w = Writer(BufWriter::new(file));
    w.bytes(&MAGIC)?;
    w.u32(VERSION)?;
    write_config(&mut w, &model.config)?;

    let words: Vec<&str> = vocab.words().collect();
    w.u32(words.len() as u32)?;
    for word in words {
        w.string(word)?;
    }
    w.u32(model.word_rows.len() as u32)?;
    for &r in &model.word_rows {
        w.u32(r)?;
    }

    write_table(&mut w, &model.word_table)?;
    write_table(&mut w, &model.c2w.char_table)?;
    write_lstm(&mut w, &model.c2w.fwd)?;
    write_lstm(&mut w, &model.c2w.bwd)?;
    w.u8(model.pos_table.is_some() as u8)?;
    if let Some(t) = &model.pos_table {
        write_table(&mut w, t)?;
    }
    write_lstm(&mut w, &model.fwd)?;
    write_lstm(&mut w, &model.bwd)?;
    write_mat(&mut w, &model.hidden.w_h)?;
    w.f64_slice(&model.hidden.b_h)?;
    write_mat(&mut w, &model.hidden.w_out)?;
    w.f64_slice(&model.hidden.b_out)?;
    w.u8(model.crf.is_some() as u8)?;
    if let Some(c) = &model.crf {
        write_mat(&mut w, &c.transitions)?;
        w.f64_slice(&c.start)?;
        w.f64_slice(&c.stop)?;
    }
    w.0.flush().with_context(|| format!("writing checkpoint {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, Vocab)> {
    let file =
        File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    let mut r = Reader(BufReader::new(file));
    let magic = r.bytes(8)?;
    ensure!(
        magic == MAGIC,
        "{} is not a tagger checkpoint (bad magic {:02x?})",
        path.display(),
        &magic[..]
    );
    let version = r.u32()?;
    ensure!(
        version == VERSION,
        "{}: unsupported checkpoint version {version} (this build reads version {VERSION})",
        path.display()
    );
    let config = read_config(&mut r)?;

    let n_words = r.u32()? as usize;
    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        words.push(r.string()?);
    }
    let vocab = Vocab::from_words(words);
    let n_rows = r.u32()? as usize;
    ensure!(
        n_rows == vocab.word_count(),
        "word-row map has {n_rows} entries for a vocabulary of {}",
        vocab.word_count()
    );
    let mut word_rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        word_rows.push(r.u32()?);
    }

    let word_table = read_table(&mut r)?;
    ensure!(
        word_table.dim() == config.dims.word_dim,
        "word table dimension {} does not match configured {}",
        word_table.dim(),
        config.dims.word_dim
    );
    ensure!(
        word_rows.iter().all(|&row| (row as usize) < word_table.rows()),
        "word-row map points past the word table"
    );
    let c2w = C2wParams {
        char_table: read_table(&mut r)?,
        fwd: read_lstm(&mut r)?,
        bwd: read_lstm(&mut r)?,
    };
    let pos_table = if r.u8()? != 0 { Some(read_table(&mut r)?) } else { None };
    ensure!(
        pos_table.is_some() == config.use_pos,
        "POS table presence does not match configuration"
    );
    let fwd = read_lstm(&mut r)?;
    let bwd = read_lstm(&mut r)?;
    let hidden = HiddenParams {
        w_h: read_mat(&mut r)?,
        b_h: r.f64_vec()?,
        w_out: read_mat(&mut r)?,
        b_out: r.f64_vec()?,
    };
    let crf = if r.u8()? != 0 {
        Some(CrfParams {
            transitions: read_mat(&mut r)?,
            start: r.f64_vec()?,
            stop: r.f64_vec()?,
        })
    } else {
        None
    };
    ensure!(
        crf.is_some() == matches!(config.head, Head::Crf),
        "CRF block presence does not match configured head"
    );
    ensure!(r.at_end()?, "trailing bytes after checkpoint payload");

    let model = Model { config, word_table, word_rows, c2w, pos_table, fwd, bwd, hidden, crf };
    Ok((model, vocab))
}

fn write_config(w: &mut Writer, c: &ModelConfig) -> Result<()> {
    w.u8(match c.head {
        Head::Softmax => 0,
        Head::Crf => 1,
    })?;
    w.u8(c.use_pos as u8)?;
    w.u8(c.finetune_word_emb as u8)?;
    w.u8(c.decode_mask as u8)?;
    for d in [
        c.dims.word_dim,
        c.dims.char_dim,
        c.dims.c2w_hidden,
        c.dims.pos_dim,
        c.dims.lstm_hidden,
        c.dims.fc_hidden,
        c.dims.num_tags,
    ] {
        w.u32(d as u32)?;
    }
    w.u64(c.seed)?;
    w.f64(c.learning_rate)?;
    w.f64(c.clip_norm)?;
    w.u32(c.epochs as u32)?;
    w.f64(c.input_dropout)
}

fn read_config(r: &mut Reader) -> Result<ModelConfig> {
    let head = match r.u8()? {
        0 => Head::Softmax,
        1 => Head::Crf,
        other => bail!("unknown head code {other}"),
    };
    let use_pos = r.u8()? != 0;
    let finetune_word_emb = r.u8()? != 0;
    let decode_mask = r.u8()? != 0;
    let mut d = [0usize; 7];
    for v in &mut d {
        *v = r.u32()? as usize;
    }
    let dims = Dims {
        word_dim: d[0],
        char_dim: d[1],
        c2w_hidden: d[2],
        pos_dim: d[3],
        lstm_hidden: d[4],
        fc_hidden: d[5],
        num_tags: d[6],
    };
    Ok(ModelConfig {
        head,
        use_pos,
        dims,
        seed: r.u64()?,
        learning_rate: r.f64()?,
        clip_norm: r.f64()?,
        epochs: r.u32()? as usize,
        finetune_word_emb,
        decode_mask,
        input_dropout: r.f64()?,
    })
}

fn write_mat(w: &mut Writer, m: &Mat) -> Result<()> {
    w.u32(m.rows() as u32)?;
    w.u32(m.cols() as u32)?;
    w.f64s(m.data())
}

fn read_mat(r: &mut Reader) -> Result<Mat> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    ensure!(rows.checked_mul(cols).is_some_and(|n| n <= 1 << 28), "matrix too large");
    let mut m = Mat::zeros(rows, cols);
    r.f64_into(m.data_mut())?;
    Ok(m)
}

fn write_table(w: &mut Writer, t: &EmbeddingTable) -> Result<()> {
    w.u32(t.trainable_rows as u32)?;
    write_mat(w, &t.weights)
}

fn read_table(r: &mut Reader) -> Result<EmbeddingTable> {
    let trainable_rows = r.u32()? as usize;
    let weights = read_mat(r)?;
    ensure!(trainable_rows <= weights.rows(), "trainable prefix exceeds table");
    Ok(EmbeddingTable { weights, trainable_rows })
}

fn write_lstm(w: &mut Writer, p: &LstmParams) -> Result<()> {
    for m in [&p.w_i, &p.w_f, &p.w_c, &p.w_o, &p.u_i, &p.u_f, &p.u_c, &p.u_o] {
        write_mat(w, m)?;
    }
    for b in [&p.b_i, &p.b_f, &p.b_c, &p.b_o] {
        w.f64_slice(b)?;
    }
    Ok(())
}

fn read_lstm(r: &mut Reader) -> Result<LstmParams> {
    Ok(LstmParams {
        w_i: read_mat(r)?,
        w_f: read_mat(r)?,
        w_c: read_mat(r)?,
        w_o: read_mat(r)?,
        u_i: read_mat(r)?,
        u_f: read_mat(r)?,
        u_c: read_mat(r)?,
        u_o: read_mat(r)?,
        b_i: r.f64_vec()?,
        b_f: r.f64_vec()?,
        b_c: r.f64_vec()?,
        b_o: r.f64_vec()?,
    })
}

struct Writer(BufWriter<File>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b).context("writing checkpoint")
    }

    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    /// Length-prefixed f64 vector.
    fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        self.u32(vs.len() as u32)?;
        self.f64s(vs)
    }

    fn string(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
}

struct Reader(BufReader<File>);

impl Reader {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.0.read_exact(&mut buf).context("checkpoint truncated")?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64_into(&mut self, out: &mut [f64]) -> Result<()> {
        for v in out {
            *v = self.f64()?;
        }
        Ok(())
    }

    fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        ensure!(n <= 1 << 28, "vector too large");
        let mut out = vec![0.0; n];
        self.f64_into(&mut out)?;
        Ok(out)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        ensure!(n <= 1 << 20, "string too large");
        String::from_utf8(self.bytes(n)?).context("checkpoint holds invalid UTF-8")
    }

    fn at_end(&mut self) -> Result<bool> {
        let mut probe = [0u8; 1];
        match self.0.read(&mut probe).context("reading checkpoint")? {
            0 => Ok(true),
            _ => Ok(false),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nertag_core::corpus::parse_conll;
    use nertag_core::embeddings::{index_sentence, parse_word2vec};
    use nertag_core::training::Variant;
    use std::collections::BTreeSet;

    fn toy_model(variant: Variant) -> (Model, Vocab, Vec<nertag_core::corpus::Sentence>) {
        let sents = parse_conll(
            "Joko\tNNP\tB-PER\nke\tPPO\tO\nBandung\tNNP\tB-LOC\n\nsate\tNNO\tB-FNB\n",
        )
        .unwrap();
        let pre = parse_word2vec("1 6\nsate 1 2 3 4 5 6\n").unwrap();
        let vocab = Vocab::build(&sents, &pre.words().map(String::from).collect::<BTreeSet<_>>());
        let mut config = ModelConfig::for_variant(variant);
        config.dims = Dims {
            word_dim: 6,
            char_dim: 3,
            c2w_hidden: 2,
            pos_dim: 3,
            lstm_hidden: 4,
            fc_hidden: 5,
            num_tags: 11,
        };
        config.seed = 77;
        let model = Model::from_pretrained(&config, &vocab, &pre);
        (model, vocab, sents)
    }

    #[test]
    fn round_trip_is_bit_exact_for_every_variant() {
        for variant in Variant::ALL {
            let (model, vocab, sents) = toy_model(variant);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.ckpt");
            save(&path, &model, &vocab).unwrap();
            let (loaded, loaded_vocab) = load(&path).unwrap();

            assert_eq!(loaded, model, "{variant}");
            assert_eq!(loaded_vocab, vocab, "{variant}");

            // Emissions reproduce exactly, not just approximately.
            let inputs = index_sentence(&loaded_vocab, &sents[0]);
            assert_eq!(loaded.forward_tokens(&inputs), model.forward_tokens(&inputs));
        }
    }

    #[test]
    fn wrong_magic_is_rejected_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_a_checkpoint");
        std::fs::write(&path, b"GARBAGE!xxxxyyyy").unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected_loudly() {
        let (model, vocab, _) = toy_model(Variant::Crf);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &model, &vocab).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99; // version field follows the 8-byte magic
        std::fs::write(&path, &bytes).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
    }

    #[test]
    fn truncation_is_detected() {
        let (model, vocab, _) = toy_model(Variant::CrfPos);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &model, &vocab).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        let err = format!("{:#}", load(&path).unwrap_err());
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn trailing_garbage_is_detected() {
        let (model, vocab, _) = toy_model(Variant::Softmax);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &model, &vocab).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("trailing"), "{err}");
    }
}
