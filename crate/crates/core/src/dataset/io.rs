use std::path::Path;

use hdf5::types::H5Type;
use hdf5::{Dataset, File, Group};
use ndarray::{Array1, Array2};

use super::{DatasetBundle, Protocol, VideoRecord};
use crate::error::{Error, Result};

const FEATURES: &str = "features";
const SEMANTIC: &str = "semantic_features";
const PICKS: &str = "picks";
const N_FRAMES: &str = "n_frames";
const CHANGE_POINTS: &str = "change_points";
const FRAMES_PER_SEG: &str = "n_frame_per_seg";
const USER_SUMMARY: &str = "user_summary";
const GT_SCORE: &str = "gtscore";

fn h5err(path: &Path) -> impl Fn(hdf5::Error) -> Error + '_ {
    move |source| Error::Hdf5 {
        path: path.to_path_buf(),
        source,
    }
}

fn group_index(name: &str) -> Option<u64> {
    name.strip_prefix("video_")?.parse().ok()
}

/// Reads a benchmark-layout HDF5 container: one `video_<k>` group per video.
pub fn load_dataset(path: impl AsRef<Path>, protocol_hint: Protocol) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(h5err(path))?;
    let mut names: Vec<(u64, String)> = file
        .member_names()
        .map_err(h5err(path))?
        .into_iter()
        .filter_map(|n| group_index(&n).map(|k| (k, n)))
        .collect();
    names.sort();
    let mut records = Vec::with_capacity(names.len());
    for (_, name) in names {
        let group = file.group(&name).map_err(h5err(path))?;
        records.push(read_video(&group, &name)?);
    }
    DatasetBundle::new(records, protocol_hint)
}

fn dataset(group: &Group, video: &str, key: &str) -> Result<Dataset> {
    group.dataset(key).map_err(|_| schema(video, key))
}

fn optional(group: &Group, key: &str) -> Option<Dataset> {
    group.link_exists(key).then(|| group.dataset(key).ok()).flatten()
}

fn schema(video: &str, key: &str) -> Error {
    Error::Schema {
        video: video.to_string(),
        key: key.to_string(),
    }
}

fn read_1d<T: H5Type + Copy>(ds: &Dataset, video: &str, key: &str) -> Result<Vec<T>> {
    ds.read_raw::<T>().map_err(|_| schema(video, key))
}

fn read_2d<T: H5Type>(ds: &Dataset, video: &str, key: &str) -> Result<Array2<T>> {
    ds.read_2d::<T>().map_err(|_| schema(video, key))
}

fn to_index(v: i64, video: &str, key: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Validation {
        video: video.to_string(),
        reason: format!("{key} contains negative value {v}"),
    })
}

fn read_video(group: &Group, video: &str) -> Result<VideoRecord> {
    let visual = read_2d::<f32>(&dataset(group, video, FEATURES)?, video, FEATURES)?;
    let semantic = read_2d::<f32>(&dataset(group, video, SEMANTIC)?, video, SEMANTIC)?;
    let picks = read_1d::<i64>(&dataset(group, video, PICKS)?, video, PICKS)?
        .into_iter()
        .map(|v| to_index(v, video, PICKS))
        .collect::<Result<Vec<_>>>()?;
    let n_frames = read_1d::<i64>(&dataset(group, video, N_FRAMES)?, video, N_FRAMES)?
        .first()
        .copied()
        .ok_or_else(|| schema(video, N_FRAMES))?;
    let n_frames = to_index(n_frames, video, N_FRAMES)?;
    let cps = read_2d::<i64>(&dataset(group, video, CHANGE_POINTS)?, video, CHANGE_POINTS)?;
    if cps.ncols() != 2 {
        return Err(schema(video, CHANGE_POINTS));
    }
    let change_points = cps
        .rows()
        .into_iter()
        .map(|r| Ok([to_index(r[0], video, CHANGE_POINTS)?, to_index(r[1], video, CHANGE_POINTS)?]))
        .collect::<Result<Vec<_>>>()?;
    let per_seg = read_1d::<i64>(&dataset(group, video, FRAMES_PER_SEG)?, video, FRAMES_PER_SEG)?;
    let consistent = per_seg.len() == change_points.len()
        && per_seg
            .iter()
            .zip(&change_points)
            .all(|(&n, &[s, e])| e >= s && n == (e - s + 1) as i64);
    if !consistent {
        return Err(Error::Validation {
            video: video.to_string(),
            reason: "n_frame_per_seg disagrees with change_points".into(),
        });
    }
    let user_summaries = match optional(group, USER_SUMMARY) {
        Some(ds) => Some(read_2d::<u8>(&ds, video, USER_SUMMARY)?),
        None => None,
    };
    let gt_score = match optional(group, GT_SCORE) {
        Some(ds) => Some(read_1d::<f32>(&ds, video, GT_SCORE)?),
        None => None,
    };
    Ok(VideoRecord {
        video_id: video.to_string(),
        visual,
        semantic,
        n_frames,
        picks,
        change_points,
        user_summaries,
        gt_score,
    })
}

/// Writes the bundle in the same layout [`load_dataset`] reads. Object
/// timestamps are disabled so identical bundles give identical bytes.
pub fn save_dataset(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let e = h5err(path);
    let file = File::with_options()
        .with_fcpl(|p| p.obj_track_times(false))
        .create(path)
        .map_err(&e)?;
    for r in &bundle.records {
        if group_index(&r.video_id).is_none() {
            return Err(Error::InvalidArgument(format!(
                "video id `{}` does not follow the video_<k> group naming",
                r.video_id
            )));
        }
        let g = file.create_group(&r.video_id).map_err(&e)?;
        g.new_dataset_builder().with_data(&r.visual).create(FEATURES).map_err(&e)?;
        g.new_dataset_builder().with_data(&r.semantic).create(SEMANTIC).map_err(&e)?;
        let picks: Array1<i64> = r.picks.iter().map(|&p| p as i64).collect();
        g.new_dataset_builder().with_data(&picks).create(PICKS).map_err(&e)?;
        g.new_dataset::<i64>()
            .create(N_FRAMES)
            .and_then(|d| d.write_scalar(&(r.n_frames as i64)))
            .map_err(&e)?;
        let cps = Array2::from_shape_fn((r.change_points.len(), 2), |(i, j)| {
            r.change_points[i][j] as i64
        });
        g.new_dataset_builder().with_data(&cps).create(CHANGE_POINTS).map_err(&e)?;
        let per_seg: Array1<i64> = r
            .change_points
            .iter()
            .map(|&[s, e]| (e - s + 1) as i64)
            .collect();
        g.new_dataset_builder().with_data(&per_seg).create(FRAMES_PER_SEG).map_err(&e)?;
        if let Some(us) = &r.user_summaries {
            g.new_dataset_builder().with_data(us).create(USER_SUMMARY).map_err(&e)?;
        }
        if let Some(gt) = &r.gt_score {
            let gt = Array1::from(gt.clone());
            g.new_dataset_builder().with_data(&gt).create(GT_SCORE).map_err(&e)?;
        }
    }
    file.close().map_err(&e)?;
    Ok(())
}
