//! `flowlens ingest`: pcaps to labeled stream JSONL plus a report.

use std::net::Ipv4Addr;
use std::path::Path;

use serde::Serialize;

use flowlens_core::capture::{
    assemble_streams, build_dns_map, label_host, read_pcap, write_streams_jsonl, ExportStream,
};
use flowlens_core::synth::apply_labels;
use flowlens_core::synth::dataset::read_labels_jsonl;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Default, Serialize)]
struct IngestReport {
    pcaps: usize,
    records: usize,
    skipped_vlan: u64,
    skipped_non_ipv4: u64,
    /// IPv4 frames with no parseable TCP/UDP header, fragments included.
    skipped_non_transport: u64,
    skipped_malformed: u64,
    skipped_total: u64,
    streams: usize,
    dns_streams: usize,
    foreign_streams: usize,
    exported: usize,
    labeled: usize,
    hosts_resolved: usize,
}

pub fn run(
    cfg: &RunConfig,
    pcaps: &[std::path::PathBuf],
    device: Option<Ipv4Addr>,
    labels: Option<&Path>,
) -> Result<(), CliError> {
    let device_ip = device.unwrap_or(cfg.device_ip);
    let mut report = IngestReport { pcaps: pcaps.len(), ..IngestReport::default() };
    let mut exports: Vec<ExportStream> = Vec::new();

    for path in pcaps {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let contents = read_pcap(&bytes)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let dns = build_dns_map(&contents.records);
        let mut streams = assemble_streams(&contents.records, device_ip);

        report.records += contents.records.len();
        report.skipped_vlan += u64::from(contents.skipped.vlan);
        report.skipped_non_ipv4 += u64::from(contents.skipped.non_ipv4);
        report.skipped_non_transport += u64::from(contents.skipped.non_transport);
        report.skipped_malformed += u64::from(contents.skipped.malformed);
        report.skipped_total += u64::from(contents.skipped.total());
        report.streams += streams.len();
        report.dns_streams += streams.iter().filter(|s| s.is_dns()).count();
        report.foreign_streams += streams.iter().filter(|s| s.foreign).count();

        for s in streams.iter_mut().filter(|s| !s.is_dns() && !s.foreign) {
            label_host(s, &dns.hosts);
            if s.host.is_some() {
                report.hosts_resolved += 1;
            }
            exports.push(ExportStream::from_stream(s));
        }
    }

    if let Some(path) = labels {
        let rows = read_labels_jsonl(&super::read_input(path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        report.labeled = apply_labels(&mut exports, &rows);
    }
    report.exported = exports.len();

    let out = &cfg.data_dir;
    super::write_output(out, "streams.jsonl", write_streams_jsonl(&exports).as_bytes())?;
    let report_text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    super::write_output(out, "ingest_report.json", report_text.as_bytes())?;

    println!(
        "ingest: {} records -> {} streams ({} exported, {} labeled, {} frames skipped) into {}",
        report.records,
        report.streams,
        report.exported,
        report.labeled,
        report.skipped_total,
        out.display()
    );
    Ok(())
}
