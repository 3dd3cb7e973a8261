//! FASTA-style pool files.
//!
//! ```text
//! >mol:<uuid> img:<image_id> layer:<k> abundance:<n>
//! <sequence, 80 columns per line>
//! ```

use std::io::{BufRead, Write};

use uuid::Uuid;

use super::{molecule_id, Pool, PoolError};

const LINE_WIDTH: usize = 80;

pub fn write_pool<W: Write>(pool: &Pool, mut w: W) -> Result<(), PoolError> {
    for e in pool.iter() {
        writeln!(
            w,
            ">mol:{} img:{} layer:{} abundance:{}",
            e.id, e.image_id, e.layer, e.abundance
        )?;
        for line in e.sequence.chunks(LINE_WIDTH) {
            w.write_all(line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Header {
    id: Uuid,
    image_id: String,
    layer: usize,
    abundance: u64,
}

fn parse_header(line: &str) -> Result<Header, PoolError> {
    let bad = || PoolError::Malformed(line.to_string());
    let mut fields = line.split_whitespace();
    let mut take = |key: &str| -> Result<&str, PoolError> {
        fields
            .next()
            .and_then(|f| f.strip_prefix(key))
            .ok_or_else(bad)
    };
    let id = Uuid::parse_str(take("mol:")?).map_err(|_| bad())?;
    let image_id = take("img:")?.to_string();
    let layer = take("layer:")?.parse().map_err(|_| bad())?;
    let abundance = take("abundance:")?.parse().map_err(|_| bad())?;
    if fields.next().is_some() || image_id.is_empty() || abundance == 0 {
        return Err(bad());
    }
    Ok(Header {
        id,
        image_id,
        layer,
        abundance,
    })
}

fn finish_record(pool: &mut Pool, header: Header, seq: Vec<u8>) -> Result<(), PoolError> {
    if seq.is_empty() {
        return Err(PoolError::Malformed(format!(
            "record {} has no sequence",
            header.id
        )));
    }
    if molecule_id(&seq) != header.id {
        return Err(PoolError::Malformed(format!(
            "record {} does not match its sequence",
            header.id
        )));
    }
    pool.insert(&header.image_id, header.layer, seq, header.abundance)?;
    Ok(())
}

pub fn read_pool<R: BufRead>(r: R) -> Result<Pool, PoolError> {
    let mut pool = Pool::new();
    let mut current: Option<(Header, Vec<u8>)> = None;
    for line in r.lines() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('>') {
            if let Some((header, seq)) = current.take() {
                finish_record(&mut pool, header, seq)?;
            }
            current = Some((parse_header(h)?, Vec::new()));
        } else {
            let (header, seq) = current
                .as_mut()
                .ok_or_else(|| PoolError::Malformed("sequence before first header".into()))?;
            if !line.bytes().all(|c| b"ACGT".contains(&c)) {
                return Err(PoolError::Alphabet(header.id.to_string()));
            }
            seq.extend_from_slice(line.as_bytes());
        }
    }
    if let Some((header, seq)) = current {
        finish_record(&mut pool, header, seq)?;
    }
    Ok(pool)
}
