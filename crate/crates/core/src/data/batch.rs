use super::Chunk;

/// Right-padded model input of shape `[B × L]`, `L` being the longest chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub kc_ids: Vec<Vec<usize>>,
    pub question_ids: Vec<Vec<usize>>,
    pub responses: Vec<Vec<u8>>,
    pub valid_mask: Vec<Vec<bool>>,
    /// Interaction index of every step (pad value at padded positions).
    pub interactions: Vec<Vec<usize>>,
    pub student_ids: Vec<String>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.kc_ids.len()
    }

    pub fn max_len(&self) -> usize {
        self.kc_ids.first().map_or(0, Vec::len)
    }

    /// Number of valid (unpadded) steps in row `b`.
    pub fn row_len(&self, b: usize) -> usize {
        self.valid_mask[b].iter().take_while(|&&v| v).count()
    }

    /// Per step of row `b`, the first position of its interaction.
    pub fn interaction_starts(&self, b: usize) -> Vec<usize> {
        let len = self.row_len(b);
        let ids = &self.interactions[b][..len];
        let mut starts = Vec::with_capacity(len);
        for p in 0..len {
            starts.push(if p > 0 && ids[p - 1] == ids[p] { starts[p - 1] } else { p });
        }
        starts
    }
}

/// Packs chunks into one padded batch. Padded positions carry `pad_token`
/// for ids, response 0 and `valid_mask == false`.
pub fn batch(chunks: &[&Chunk], pad_token: usize) -> Batch {
    let max_len = chunks.iter().map(|c| c.len()).max().unwrap_or(0);
    let pad = |len: usize, mut v: Vec<usize>| {
        v.resize(len, pad_token);
        v
    };
    let mut out = Batch {
        kc_ids: Vec::with_capacity(chunks.len()),
        question_ids: Vec::with_capacity(chunks.len()),
        responses: Vec::with_capacity(chunks.len()),
        valid_mask: Vec::with_capacity(chunks.len()),
        interactions: Vec::with_capacity(chunks.len()),
        student_ids: Vec::with_capacity(chunks.len()),
    };
    for c in chunks {
        out.kc_ids.push(pad(max_len, c.steps.iter().map(|s| s.kc_id).collect()));
        out.question_ids.push(pad(max_len, c.steps.iter().map(|s| s.question_id).collect()));
        out.interactions.push(pad(max_len, c.steps.iter().map(|s| s.interaction).collect()));
        let mut r: Vec<u8> = c.steps.iter().map(|s| s.response).collect();
        r.resize(max_len, 0);
        out.responses.push(r);
        let mut m = vec![true; c.len()];
        m.resize(max_len, false);
        out.valid_mask.push(m);
        out.student_ids.push(c.student_id.clone());
    }
    out
}
