use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::timeseries::{format_timestamp, hours_between, parse_timestamp, Timestamp};

/// One hour of outdoor conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: Timestamp,
    /// Global horizontal irradiance, W·m⁻².
    pub ghi: f64,
    /// °C
    pub t_out: f64,
    /// °C
    pub dew_point: f64,
    /// m·s⁻¹
    pub wind_speed: f64,
    /// kPa
    pub station_pressure: f64,
    /// kPa
    pub sea_level_pressure: f64,
    /// degrees
    pub wind_direction: f64,
    /// %
    pub rh_out: f64,
}

impl WeatherRecord {
    /// Calm, dark, dry-ish hour at `t_out`.
    pub fn still(timestamp: Timestamp, t_out: f64) -> Self {
        Self {
            timestamp,
            ghi: 0.0,
            t_out,
            dew_point: t_out - 8.0,
            wind_speed: 0.0,
            station_pressure: 100.0,
            sea_level_pressure: 101.3,
            wind_direction: 0.0,
            rh_out: super::climate::relative_humidity(t_out, t_out - 8.0),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.ghi >= 0.0) {
            return Err(format!("ghi {} must be non-negative", self.ghi));
        }
        if !(0.0..=100.0).contains(&self.rh_out) {
            return Err(format!("rh {} outside [0, 100]", self.rh_out));
        }
        let all = [
            self.t_out,
            self.dew_point,
            self.wind_speed,
            self.station_pressure,
            self.sea_level_pressure,
            self.wind_direction,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("non-finite field".into());
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeatherRow {
    timestamp_iso8601: String,
    ghi_wm2: f64,
    temp_c: f64,
    dew_point_c: f64,
    wind_speed_ms: f64,
    station_pressure_kpa: f64,
    sea_level_pressure_kpa: f64,
    wind_dir_deg: f64,
    rh_pct: f64,
}

pub fn read_weather_csv<R: Read>(reader: R) -> Result<Vec<WeatherRecord>, SimError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<WeatherRecord> = Vec::new();
    for (i, row) in r.deserialize::<WeatherRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| SimError::Data(format!("weather line {line}: {e}")))?;
        let timestamp = parse_timestamp(&row.timestamp_iso8601)
            .map_err(|e| SimError::Data(format!("weather line {line}: {e}")))?;
        let rec = WeatherRecord {
            timestamp,
            ghi: row.ghi_wm2,
            t_out: row.temp_c,
            dew_point: row.dew_point_c,
            wind_speed: row.wind_speed_ms,
            station_pressure: row.station_pressure_kpa,
            sea_level_pressure: row.sea_level_pressure_kpa,
            wind_direction: row.wind_dir_deg,
            rh_out: row.rh_pct,
        };
        rec.check()
            .map_err(|e| SimError::Data(format!("weather line {line}: {e}")))?;
        if let Some(prev) = out.last() {
            if hours_between(&prev.timestamp, &rec.timestamp) != 1 {
                return Err(SimError::Data(format!(
                    "weather line {line}: {} does not follow {} by one hour",
                    format_timestamp(&rec.timestamp),
                    format_timestamp(&prev.timestamp)
                )));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_weather_csv<W: Write>(records: &[WeatherRecord], writer: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| SimError::Io(e.to_string());
    for rec in records {
        w.serialize(WeatherRow {
            timestamp_iso8601: format_timestamp(&rec.timestamp),
            ghi_wm2: rec.ghi,
            temp_c: rec.t_out,
            dew_point_c: rec.dew_point,
            wind_speed_ms: rec.wind_speed,
            station_pressure_kpa: rec.station_pressure,
            sea_level_pressure_kpa: rec.sea_level_pressure,
            wind_dir_deg: rec.wind_direction,
            rh_pct: rec.rh_out,
        })
        .map_err(io)?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{add_hours, year_start};

    #[test]
    fn csv_round_trip_and_gap_detection() {
        let t0 = year_start(2024);
        let recs: Vec<_> = (0..5)
            .map(|h| WeatherRecord::still(add_hours(&t0, h), h as f64))
            .collect();
        let mut buf = Vec::new();
        write_weather_csv(&recs, &mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with(
            "timestamp_iso8601,ghi_wm2,temp_c,dew_point_c,wind_speed_ms,station_pressure_kpa,sea_level_pressure_kpa,wind_dir_deg,rh_pct"
        ));
        assert_eq!(read_weather_csv(&buf[..]).unwrap(), recs);

        let mut gappy = recs.clone();
        gappy.remove(2);
        let mut buf = Vec::new();
        write_weather_csv(&gappy, &mut buf).unwrap();
        let err = read_weather_csv(&buf[..]).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
    }
}
