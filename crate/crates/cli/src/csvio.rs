//! CSV input: comma-separated decimal floats, one sample per row, optional
//! header line.

use std::io::{Read, Write};

use anyhow::{anyhow, Context};
use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use cumstream::data::DataBatch;

/// Splits a CSV stream into the priming batch of `t` rows followed by batches
/// of `t_up` rows. The last batch may be shorter when the input runs out.
pub struct CsvBatches<R: Read> {
    reader: csv::Reader<R>,
    record: StringRecord,
    n: usize,
    next_rows: usize,
    t_up: usize,
    failed: bool,
}

impl<R: Read> CsvBatches<R> {
    pub fn new(input: R, header: bool, n: usize, t: usize, t_up: usize) -> Self {
        let reader = ReaderBuilder::new()
            .has_headers(header)
            .flexible(true)
            .trim(Trim::All)
            .from_reader(input);
        CsvBatches { reader, record: StringRecord::new(), n, next_rows: t, t_up, failed: false }
    }

    fn read_batch(&mut self, rows: usize) -> anyhow::Result<Option<DataBatch>> {
        let mut data = Vec::with_capacity(rows * self.n);
        let mut got = 0;
        while got < rows {
            if !self.reader.read_record(&mut self.record).context("reading CSV")? {
                break;
            }
            let line = self.record.position().map_or(0, |p| p.line());
            if self.record.len() != self.n {
                return Err(anyhow!("line {line}: expected {} fields, found {}", self.n, self.record.len()));
            }
            for (k, field) in self.record.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| anyhow!("line {line}, column {}: {field:?} is not a number", k + 1))?;
                data.push(v);
            }
            got += 1;
        }
        if got == 0 {
            return Ok(None);
        }
        Ok(Some(DataBatch::new(got, self.n, data)?))
    }
}

impl<R: Read> Iterator for CsvBatches<R> {
    type Item = anyhow::Result<DataBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let rows = self.next_rows;
        self.next_rows = self.t_up;
        match self.read_batch(rows) {
            Ok(batch) => batch.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// CSV writer for data batches, optionally preceded by `x0,x1,...`.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W, header: Option<usize>) -> anyhow::Result<Self> {
        let mut writer = WriterBuilder::new().has_headers(false).from_writer(out);
        if let Some(n) = header {
            writer.write_record((0..n).map(|j| format!("x{j}")))?;
        }
        Ok(CsvSink { writer })
    }

    pub fn write_batch(&mut self, x: &DataBatch) -> anyhow::Result<()> {
        let mut buf: Vec<String> = Vec::with_capacity(x.cols());
        for i in 0..x.rows() {
            buf.clear();
            buf.extend(x.row(i).iter().map(|v| v.to_string()));
            self.writer.write_record(&buf)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<W> {
        self.writer.flush()?;
        self.writer.into_inner().map_err(|e| anyhow!("flushing CSV output: {}", e.error()))
    }
}
