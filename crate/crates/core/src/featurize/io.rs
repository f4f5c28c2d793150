use std::io::{Read, Write};

use crate::domain::FeatureVector;

use super::FeaturizeError;

pub const FEATURE_CSV_HEADER: &str = "chunk_start_ms,std_rush_orders,avg_rush_orders,std_trades,std_volumes,avg_volumes,std_price,avg_price,avg_price_max,avg_price_min,label";

/// Writes feature vectors as CSV with [`FEATURE_CSV_HEADER`].
pub fn write_feature_csv<W: Write>(out: W, vectors: &[FeatureVector]) -> Result<(), FeaturizeError> {
    let mut w = csv::Writer::from_writer(out);
    for v in vectors {
        w.serialize(v)?;
    }
    if vectors.is_empty() {
        w.write_record(FEATURE_CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<Vec<FeatureVector>, FeaturizeError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != FEATURE_CSV_HEADER {
        return Err(FeaturizeError::Csv(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected feature header: {}", header.join(",")),
        ))));
    }
    r.deserialize().map(|row| row.map_err(FeaturizeError::from)).collect()
}
