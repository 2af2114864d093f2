//! Text model files.
//!
//! ```text
//! MLPV1
//! layer_sizes 3 500 1
//! activations relu linear
//! weights 0 3 500
//! <one line per row, space separated>
//! biases 0 1 500
//! <one line>
//! ...
//! end
//! ADAMV1            (optional optimizer checkpoint)
//! step 2000
//! epoch 2000
//! m 0 3 500
//! ...
//! v 0 3 500
//! ...
//! end
//! ```
//!
//! Values are written with 17 significant digits (`{:.16e}`), which
//! round-trips every finite `f64` bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Activation, MlpModel};
use crate::numerics::Matrix;
use crate::optim::AdamState;

pub const MODEL_MAGIC: &str = "MLPV1";
pub const ADAM_MAGIC: &str = "ADAMV1";

/// Adam state plus the number of completed epochs, for resuming training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub adam: AdamState,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: MlpModel,
    pub checkpoint: Option<Checkpoint>,
}

fn write_matrix(out: &mut String, tag: &str, index: usize, m: &Matrix) {
    let _ = writeln!(out, "{tag} {index} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let mut first = true;
        for v in m.row(r) {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
}

impl ModelFile {
    pub fn new(model: MlpModel) -> Self {
        ModelFile {
            model,
            checkpoint: None,
        }
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        out.push_str(MODEL_MAGIC);
        out.push('\n');
        let sizes: Vec<String> = m.layer_sizes().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "layer_sizes {}", sizes.join(" "));
        let _ = writeln!(
            out,
            "activations {} {}",
            m.hidden_activation(),
            m.output_activation()
        );
        for l in 0..m.num_layers() {
            write_matrix(&mut out, "weights", l, &m.weights()[l]);
            write_matrix(&mut out, "biases", l, &m.biases()[l]);
        }
        out.push_str("end\n");
        if let Some(ck) = &self.checkpoint {
            out.push_str(ADAM_MAGIC);
            out.push('\n');
            let _ = writeln!(out, "step {}", ck.adam.t);
            let _ = writeln!(out, "epoch {}", ck.epoch);
            for (i, mm) in ck.adam.m.iter().enumerate() {
                write_matrix(&mut out, "m", i, mm);
            }
            for (i, vv) in ck.adam.v.iter().enumerate() {
                write_matrix(&mut out, "v", i, vv);
            }
            out.push_str("end\n");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser {
            lines: text.lines(),
            line_no: 0,
        };
        p.expect_exact(MODEL_MAGIC, "MLPV1 header")?;

        let sizes_line = p.keyed("layer_sizes", "layer_sizes")?;
        let layer_sizes = sizes_line
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::model_format("layer_sizes", e.to_string()))?;
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::model_format(
                "layer_sizes",
                format!("invalid sizes {layer_sizes:?}"),
            ));
        }

        let acts = p.keyed("activations", "activations")?;
        if acts.len() != 2 {
            return Err(Error::model_format("activations", "expected two tags"));
        }
        let parse_act = |s: &str| {
            s.parse::<Activation>()
                .map_err(|e| Error::model_format("activations", e.to_string()))
        };
        let hidden = parse_act(&acts[0])?;
        let output = parse_act(&acts[1])?;

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (r, c) = (layer_sizes[l], layer_sizes[l + 1]);
            weights.push(p.matrix("weights", l, (r, c))?);
            biases.push(p.matrix("biases", l, (1, c))?);
        }
        p.expect_exact("end", "MLPV1 end")?;
        let model = MlpModel::from_parts(layer_sizes, weights, biases, hidden, output)
            .map_err(|e| Error::model_format("MLPV1", e.to_string()))?;

        let checkpoint = match p.next_line() {
            None => None,
            Some(line) if line.trim().is_empty() => None,
            Some(line) if line.trim() == ADAM_MAGIC => Some(p.adam_section(&model)?),
            Some(line) => {
                return Err(Error::model_format(
                    "trailer",
                    format!("line {}: unexpected '{}'", p.line_no, line.trim()),
                ))
            }
        };
        if let Some(line) = p.next_line() {
            if !line.trim().is_empty() {
                return Err(Error::model_format(
                    "trailer",
                    format!("line {}: unexpected '{}'", p.line_no, line.trim()),
                ));
            }
        }
        Ok(ModelFile { model, checkpoint })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelFile::parse(&text)
    }
}

struct Parser<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn next_line(&mut self) -> Option<&'a str> {
        let line = self.lines.next()?;
        self.line_no += 1;
        Some(line)
    }

    fn require(&mut self, section: &str) -> Result<&'a str> {
        self.next_line()
            .ok_or_else(|| Error::model_format(section, "unexpected end of file"))
    }

    fn expect_exact(&mut self, want: &str, section: &str) -> Result<()> {
        let line = self.require(section)?;
        if line.trim() != want {
            return Err(Error::model_format(
                section,
                format!(
                    "line {}: expected '{want}', found '{}'",
                    self.line_no,
                    line.trim()
                ),
            ));
        }
        Ok(())
    }

    /// A `key v1 v2 ...` line; returns the values.
    fn keyed(&mut self, key: &str, section: &str) -> Result<Vec<String>> {
        let line = self.require(section)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::model_format(
                section,
                format!("line {}: expected '{key}'", self.line_no),
            ));
        }
        Ok(parts.map(str::to_owned).collect())
    }

    fn matrix(&mut self, tag: &str, index: usize, shape: (usize, usize)) -> Result<Matrix> {
        let section = format!("{tag} {index}");
        let header = self.keyed(tag, &section)?;
        let want = [index.to_string(), shape.0.to_string(), shape.1.to_string()];
        if header != want {
            return Err(Error::model_format(
                &section,
                format!(
                    "line {}: expected header '{tag} {} {} {}', found '{tag} {}'",
                    self.line_no,
                    want[0],
                    want[1],
                    want[2],
                    header.join(" ")
                ),
            ));
        }
        let mut data = Vec::with_capacity(shape.0 * shape.1);
        for _ in 0..shape.0 {
            let line = self.require(&section)?;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::model_format(
                        &section,
                        format!("line {}: bad number '{tok}'", self.line_no),
                    )
                })?;
                data.push(v);
            }
            if data.len() - before != shape.1 {
                return Err(Error::model_format(
                    &section,
                    format!(
                        "line {}: expected {} values, found {}",
                        self.line_no,
                        shape.1,
                        data.len() - before
                    ),
                ));
            }
        }
        Matrix::new(shape.0, shape.1, data)
            .map_err(|e| Error::model_format(&section, e.to_string()))
    }

    fn adam_section(&mut self, model: &MlpModel) -> Result<Checkpoint> {
        let scalar = |vals: Vec<String>, section: &str| -> Result<u64> {
            match vals.as_slice() {
                [v] => v
                    .parse()
                    .map_err(|_| Error::model_format(section, format!("bad count '{v}'"))),
                _ => Err(Error::model_format(section, "expected one value")),
            }
        };
        let t = scalar(self.keyed("step", "ADAMV1 step")?, "ADAMV1 step")?;
        let epoch = scalar(self.keyed("epoch", "ADAMV1 epoch")?, "ADAMV1 epoch")?;
        let shapes = model.param_shapes();
        let mut m = Vec::with_capacity(shapes.len());
        for (i, &s) in shapes.iter().enumerate() {
            m.push(self.matrix("m", i, s)?);
        }
        let mut v = Vec::with_capacity(shapes.len());
        for (i, &s) in shapes.iter().enumerate() {
            v.push(self.matrix("v", i, s)?);
        }
        self.expect_exact("end", "ADAMV1 end")?;
        let adam = AdamState::from_parts(m, v, t)
            .map_err(|e| Error::model_format("ADAMV1", e.to_string()))?;
        Ok(Checkpoint { adam, epoch })
    }
}
