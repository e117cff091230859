//! Crawl records and their on-disk forms: JSON Lines (lossless) and a CSV
//! view with the table's column order.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::ExtractedPage;

pub const CSV_HEADER: [&str; 8] = [
    "ID",
    "Page Number",
    "Title",
    "Description",
    "Keyword",
    "Page Component",
    "Images",
    "Links to",
];

const LIST_SEPARATOR: &str = "|";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrawlRecord {
    pub id: u64,
    pub page_number: u64,
    pub url: String,
    pub title: String,
    pub description: String,
    pub keywords: Vec<String>,
    pub page_component: String,
    pub images: Vec<String>,
    pub links_to: Vec<String>,
}

pub fn make_record(page: &ExtractedPage, id: u64, page_number: u64) -> CrawlRecord {
    debug_assert!(id >= 1 && page_number >= 1);
    CrawlRecord {
        id,
        page_number,
        url: page.url.to_string(),
        title: page.title.clone(),
        description: page.description.clone(),
        keywords: page.keywords.clone(),
        page_component: page.page_component.clone(),
        images: page.images.iter().map(ToString::to_string).collect(),
        links_to: page.links.iter().map(ToString::to_string).collect(),
    }
}

pub fn write_jsonl<'a, W, I>(records: I, mut destination: W) -> Result<usize, StoreError>
where
    W: Write,
    I: IntoIterator<Item = &'a CrawlRecord>,
{
    let mut count = 0;
    for record in records {
        serde_json::to_writer(&mut destination, record).map_err(io::Error::from)?;
        destination.write_all(b"\n")?;
        count += 1;
    }
    destination.flush()?;
    Ok(count)
}

pub fn read_records<R: BufRead>(source: R) -> Result<Vec<CrawlRecord>, StoreError> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let record = serde_json::from_str(&line).map_err(|e| StoreError::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_csv<'a, W, I>(records: I, destination: W) -> Result<usize, StoreError>
where
    W: Write,
    I: IntoIterator<Item = &'a CrawlRecord>,
{
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(destination);
    writer.write_record(CSV_HEADER).map_err(csv_error)?;
    let mut count = 0;
    for r in records {
        writer
            .write_record([
                r.id.to_string(),
                r.page_number.to_string(),
                r.title.clone(),
                r.description.clone(),
                r.keywords.join(LIST_SEPARATOR),
                r.page_component.clone(),
                r.images.join(LIST_SEPARATOR),
                r.links_to.join(LIST_SEPARATOR),
            ])
            .map_err(csv_error)?;
        count += 1;
    }
    writer.flush()?;
    Ok(count)
}

fn csv_error(err: csv::Error) -> StoreError {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => StoreError::IoFailure(e),
        other => StoreError::IoFailure(io::Error::other(format!("{other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontier::NormalizedUrl;
    use proptest::prelude::*;

    fn sample() -> CrawlRecord {
        CrawlRecord {
            id: 1,
            page_number: 1,
            url: "http://h/".into(),
            title: "Hello, world".into(),
            description: "say \"hi\"".into(),
            keywords: vec!["a".into(), "b".into()],
            page_component: "line\nbreak".into(),
            images: vec![],
            links_to: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn empty_page_record() {
        let page = ExtractedPage::empty(NormalizedUrl::parse("http://h/").unwrap());
        let r = make_record(&page, 1, 1);
        assert_eq!((r.id, r.page_number), (1, 1));
        assert!(r.title.is_empty() && r.keywords.is_empty() && r.links_to.is_empty());
        assert_eq!(r.url, "http://h/");
    }

    #[test]
    fn jsonl_empty_and_single() {
        let mut buf = Vec::new();
        assert_eq!(write_jsonl(&[], &mut buf).unwrap(), 0);
        assert!(buf.is_empty());

        let mut buf = Vec::new();
        assert_eq!(write_jsonl(&[sample()], &mut buf).unwrap(), 1);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with('\n') && !text.ends_with("\n\n"));
        assert_eq!(text.matches('\n').count(), 1);
        assert!(text.starts_with(
            r#"{"id":1,"page_number":1,"url":"http://h/","title":"Hello, world","description":"#
        ));
        assert!(text.trim_end().ends_with(r#""images":[],"links_to":["a","b"]}"#));
    }

    #[test]
    fn read_empty_and_malformed() {
        assert!(read_records(&b""[..]).unwrap().is_empty());
        let mut buf = Vec::new();
        write_jsonl(&[sample()], &mut buf).unwrap();
        buf.extend_from_slice(b"not json\n");
        match read_records(&buf[..]) {
            Err(StoreError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn csv_header_only_for_no_records() {
        let mut buf = Vec::new();
        assert_eq!(write_csv(&[], &mut buf).unwrap(), 0);
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "ID,Page Number,Title,Description,Keyword,Page Component,Images,Links to\n"
        );
    }

    #[test]
    fn csv_quoting_and_list_join() {
        let mut buf = Vec::new();
        write_csv(&[sample()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.split_once('\n').unwrap().1;
        assert_eq!(row, "1,1,\"Hello, world\",\"say \"\"hi\"\"\",a|b,\"line\nbreak\",,a|b\n");
    }

    fn record() -> impl Strategy<Value = CrawlRecord> {
        let s = "\\PC{0,20}";
        let list = prop::collection::vec("\\PC{0,12}", 0..4);
        (1u64..1_000_000, 1u64..1_000_000, s, s, s, list.clone(), "[\\PC\n\t\"\\\\]{0,40}", list.clone(), list)
            .prop_map(|(id, page_number, url, title, description, keywords, page_component, images, links_to)| {
                CrawlRecord { id, page_number, url, title, description, keywords, page_component, images, links_to }
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(records in prop::collection::vec(record(), 0..20)) {
            let mut buf = Vec::new();
            prop_assert_eq!(write_jsonl(&records, &mut buf).unwrap(), records.len());
            prop_assert_eq!(read_records(&buf[..]).unwrap(), records);
        }
    }
}
