//! CSV writers for run results.

use std::io::Write;

use crate::analysis::Bounds;
use crate::monitor::RunResult;
use crate::oracle::Valuation;

type CsvResult = Result<(), csv::Error>;

/// `stream,index,value` for the named streams.
pub fn outputs<W: Write>(w: W, v: &Valuation, streams: &[String]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stream", "index", "value"])?;
    for s in streams {
        if let Some(col) = v.streams.get(s) {
            for (k, x) in col.iter().enumerate() {
                out.write_record([s.as_str(), &k.to_string(), &x.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `stream,index,ttr`.
pub fn ttr<W: Write>(w: W, r: &RunResult, streams: &[String]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stream", "index", "ttr"])?;
    for s in streams {
        for (k, t) in r.ttr(s).iter().enumerate() {
            out.write_record([s.as_str(), &k.to_string(), &t.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `stream,index,instantiatedAt,resolvedAt` for every stream.
pub fn resolved<W: Write>(w: W, r: &RunResult) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stream", "index", "instantiatedAt", "resolvedAt"])?;
    for s in r.program.ids() {
        for (k, e) in r.resolved[s.ix()].iter().enumerate() {
            out.write_record([
                r.program.name(s),
                &k.to_string(),
                &e.instantiated_at.to_string(),
                &e.resolved_at.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `tick,node,mem`.
pub fn memory<W: Write>(w: W, r: &RunResult) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick", "node", "mem"])?;
    for m in &r.metrics {
        out.write_record([m.tick.to_string(), r.program.node_name(m.node).to_string(), m.mem.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `tick,node,mem,msgsResp,msgsReq,msgsConfirm`.
pub fn metrics<W: Write>(w: W, r: &RunResult) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick", "node", "mem", "msgsResp", "msgsReq", "msgsConfirm"])?;
    for m in &r.metrics {
        out.write_record([
            m.tick.to_string(),
            r.program.node_name(m.node).to_string(),
            m.mem.to_string(),
            m.msgs_resp.to_string(),
            m.msgs_req.to_string(),
            m.msgs_confirm.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `tick,src,dst,type,stream,index`; empty unless the run recorded messages.
pub fn messages<W: Write>(w: W, r: &RunResult) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick", "src", "dst", "type", "stream", "index"])?;
    for m in &r.messages {
        out.write_record([
            m.sent_at.to_string(),
            r.program.node_name(m.src).to_string(),
            r.program.node_name(m.dst).to_string(),
            m.kind.as_str().to_string(),
            r.program.name(m.var.stream).to_string(),
            m.var.index.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `stream,index,mtr_exact,mtr_temporary,mtr_aeternal,ttr_observed`.
pub fn bounds<W: Write>(w: W, r: &RunResult, b: &Bounds, streams: &[String]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stream", "index", "mtr_exact", "mtr_temporary", "mtr_aeternal", "ttr_observed"])?;
    for name in streams {
        let Some(s) = r.program.id(name) else { continue };
        for k in 0..b.len as usize {
            out.write_record([
                name.clone(),
                k.to_string(),
                b.exact[s.ix()][k].to_string(),
                b.temporary[s.ix()][k].to_string(),
                b.aeternal[s.ix()][k].to_string(),
                (r.resolved[s.ix()][k].resolved_at - k as u64).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
