//! Newline-delimited JSON scorer protocol.
//!
//! One request object per line, one response object per line, answered in
//! request order. Failures are reported in band as `{"ok":false,"error":...}`
//! and never close the connection.
//!
//! ```text
//! {"op":"score","context":[..],"private":[..],"mask_index":k} -> {"ok":true,"logits":[..]}
//! {"op":"tokenize","text":".."}                                -> {"ok":true,"tokens":[..]}
//! {"op":"detokenize","tokens":[..]}                            -> {"ok":true,"text":".."}
//! {"op":"vocab"}                          -> {"ok":true,"tokens":[..],"mask":"..","sep":".."}
//! {"op":"embed","text":".."}                                   -> {"ok":true,"vector":[..]}
//! ```

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{MaskQuery, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Score {
        context: Vec<String>,
        private: Vec<String>,
        mask_index: usize,
    },
    Tokenize {
        text: String,
    },
    Detokenize {
        tokens: Vec<String>,
    },
    Vocab,
    Embed {
        text: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sep: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn error(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(message.into()),
            ..Self::default()
        }
    }

    fn ok() -> Self {
        Self {
            ok: true,
            ..Self::default()
        }
    }
}

/// Answer a single request against a local backend.
pub fn handle(request: Request, backend: &dyn Scorer) -> Response {
    let outcome = match request {
        Request::Score {
            context,
            private,
            mask_index,
        } => MaskQuery::new(context, private, mask_index)
            .and_then(|q| backend.score_masked(&q))
            .map(|logits| Response {
                logits: Some(logits.into_inner()),
                ..Response::ok()
            }),
        Request::Tokenize { text } => backend.tokenize(&text).map(|tokens| Response {
            tokens: Some(tokens),
            ..Response::ok()
        }),
        Request::Detokenize { tokens } => backend.detokenize(&tokens).map(|text| Response {
            text: Some(text),
            ..Response::ok()
        }),
        Request::Vocab => {
            let vocab = backend.vocabulary();
            Ok(Response {
                tokens: Some(vocab.tokens().to_vec()),
                mask: Some(vocab.mask().to_string()),
                sep: Some(vocab.sep().to_string()),
                ..Response::ok()
            })
        }
        Request::Embed { text } => match backend.embedder() {
            Some(embedder) => embedder.embed(&text).map(|vector| Response {
                vector: Some(vector),
                ..Response::ok()
            }),
            None => return Response::error("embed capability not supported by this backend"),
        },
    };
    outcome.unwrap_or_else(|e| Response::error(e.to_string()))
}

/// Answer a single raw line, including malformed ones.
pub fn handle_line(line: &str, backend: &dyn Scorer) -> Response {
    match serde_json::from_str::<Request>(line) {
        Ok(request) => handle(request, backend),
        Err(e) => Response::error(format!("malformed request: {e}")),
    }
}

/// Serve one stream until EOF. Blank lines are ignored.
pub fn serve<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    backend: &dyn Scorer,
) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(&line, backend);
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Accept connections forever, one thread per connection.
pub fn serve_tcp(listener: TcpListener, backend: Arc<dyn Scorer>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let backend = Arc::clone(&backend);
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(_) => return,
            };
            // a dropped client just ends this connection
            let _ = serve(reader, stream, backend.as_ref());
        });
    }
    Ok(())
}
