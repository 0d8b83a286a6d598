import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frames import FrameSequence, MaskSequence
from minimize import (
    BlurRegions,
    ClipSegmentation,
    Downsample,
    FrameTooSmallError,
    InvalidPipelineError,
    InvalidSamplingError,
    MaskRegions,
    MissingMasksError,
    PipelineSpec,
    SequenceTooShortError,
    TemporalSample,
    apply_pipeline,
    background_removal,
    blur_regions,
    downsample,
    downsample_masks,
    gaussian_kernel,
    load_pipeline_spec,
    load_segmentation,
    mask_regions,
    segment_clips,
    settings_grid,
    temporal_sample,
    temporal_sample_indices,
)


def constant(t, h, w, value, channels=3):
    return FrameSequence.from_array(np.full((t, h, w, channels), value, dtype=np.uint8))


@pytest.mark.parametrize(
    "t_count, stride, start, expected",
    (
        (10, 3, 1, (1, 4, 7)),
        (10, 1, 0, tuple(range(10))),
        (1, 5, 0, (0,)),
        (12, 5, 0, (0, 5, 10)),
    ),
)
def test_temporal_sample_indices(t_count, stride, start, expected):
    assert temporal_sample_indices(t_count, stride, start).indices == expected


@pytest.mark.parametrize("stride, start", ((0, 0), (-2, 0), (2, 10), (2, -1)))
def test_temporal_sample_rejects(stride, start):
    with pytest.raises(InvalidSamplingError):
        temporal_sample_indices(10, stride, start)


def test_temporal_sample_carries_masks(gradient, centre_masks):
    sampled, masks = temporal_sample(gradient, centre_masks, stride=3)
    assert sampled.indices == (0, 3, 6)
    assert masks.t_count == 3
    assert np.array_equal(sampled.frames[1], gradient.frames[3])


def test_downsample_rounds_half_up():
    block = np.array([[[0, 1], [1, 1]], [[0, 0], [1, 1]], [[0, 0], [0, 1]]], dtype=np.uint8)
    sequence = FrameSequence.from_array(block)

    out = downsample(sequence, 2)

    assert out.shape == (3, 1, 1)
    assert out.frames[:, 0, 0, 0].tolist() == [1, 1, 0]


def test_downsample_block_means():
    frames = np.zeros((1, 4, 4, 3), dtype=np.uint8)
    frames[0, :2, :2] = 200
    frames[0, 2:, 2:, 0] = 10
    out = downsample(FrameSequence.from_array(frames), 2)
    assert out.frames[0, 0, 0].tolist() == [200, 200, 200]
    assert out.frames[0, 1, 1].tolist() == [10, 0, 0]
    assert out.frames[0, 0, 1].tolist() == [0, 0, 0]


def test_downsample_truncates_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        out = downsample(constant(2, 5, 9, 7), 4)
    assert out.shape == (2, 1, 2)
    assert (out.frames == 7).all()
    assert "truncating" in caplog.text


def test_downsample_errors():
    with pytest.raises(FrameTooSmallError):
        downsample(constant(1, 1, 8, 0), 2)
    with pytest.raises(InvalidPipelineError):
        downsample(constant(1, 6, 6, 0), 3)


def test_downsample_masks_majority():
    masks = np.zeros((1, 2, 4), dtype=np.uint8)
    masks[0, 0, :2] = 1
    masks[0, 0, 2] = 1
    out = downsample_masks(MaskSequence.from_array(masks), 2)
    assert out.masks.tolist() == [[[1, 0]]]


def test_mask_regions(gradient, centre_masks):
    out = mask_regions(gradient, centre_masks, fill=9)
    inside = centre_masks.masks.astype(bool)
    assert (out.frames[inside] == 9).all()
    assert np.array_equal(out.frames[~inside], gradient.frames[~inside])
    assert out.indices == gradient.indices


def test_gaussian_kernel():
    kernel = gaussian_kernel(10, 10)
    assert kernel.shape == (21,)
    assert kernel.sum() == pytest.approx(1.0)
    assert np.allclose(kernel, kernel[::-1])
    assert kernel.argmax() == 10


@pytest.mark.parametrize("sigma, radius", ((0, 10), (-1, 10), (10, 0)))
def test_gaussian_kernel_rejects(sigma, radius):
    with pytest.raises(InvalidPipelineError):
        gaussian_kernel(sigma, radius)


def test_blur_leaves_unmasked_pixels(gradient, centre_masks):
    out = blur_regions(gradient, centre_masks, sigma=2, radius=3)
    outside = ~centre_masks.masks.astype(bool)
    assert np.array_equal(out.frames[outside], gradient.frames[outside])


def test_blur_of_constant_frame_is_exact():
    sequence = constant(2, 7, 9, 123)
    masks = MaskSequence.from_array(np.ones(sequence.shape, dtype=np.uint8))
    out = blur_regions(sequence, masks, sigma=10, radius=10)
    assert (out.frames == 123).all()


def test_blur_impulse_response():
    frames = np.zeros((1, 41, 41, 1), dtype=np.uint8)
    frames[0, 20, 20, 0] = 255
    sequence = FrameSequence.from_array(frames)
    masks = MaskSequence.from_array(np.ones(sequence.shape, dtype=np.uint8))

    out = blur_regions(sequence, masks, sigma=10, radius=10, workers=1)

    centre = gaussian_kernel(10, 10)[10]
    assert abs(int(out.frames[0, 20, 20, 0]) - 255 * centre**2) <= 1
    assert out.frames[0, 0, 0, 0] == 0


def test_blur_small_kernel_is_symmetric():
    frames = np.zeros((1, 7, 7, 1), dtype=np.uint8)
    frames[0, 3, 3, 0] = 255
    sequence = FrameSequence.from_array(frames)
    masks = MaskSequence.from_array(np.ones(sequence.shape, dtype=np.uint8))

    out = blur_regions(sequence, masks, sigma=1, radius=3, workers=1).frames[0, :, :, 0]

    centre = gaussian_kernel(1, 3)[3]
    assert abs(int(out[3, 3]) - 255 * centre**2) <= 1
    assert (out == out[::-1]).all()
    assert (out == out.T).all()
    assert (out == out[:, ::-1]).all()


def test_blur_is_deterministic_across_workers(gradient, centre_masks):
    one = blur_regions(gradient, centre_masks, workers=1)
    many = blur_regions(gradient, centre_masks, workers=4)
    assert np.array_equal(one.frames, many.frames)


def test_background_removal_keeps_moving_pixels():
    frames = np.full((3, 4, 4, 3), 50, dtype=np.uint8)
    frames[1, 0, 0] = 200
    out = background_removal(FrameSequence.from_array(frames), threshold=25, fill=0)
    assert out.frames[1, 0, 0].tolist() == [200, 200, 200]
    assert out.frames.sum() == 600


def test_background_removal_uses_lower_median():
    frames = np.array([[[10]], [[100]]], dtype=np.uint8)
    out = background_removal(FrameSequence.from_array(frames), threshold=25, fill=1)
    assert out.frames[:, 0, 0, 0].tolist() == [1, 100]


def test_background_removal_needs_two_frames():
    with pytest.raises(SequenceTooShortError):
        background_removal(constant(1, 4, 4, 0))


def test_empty_pipeline_is_identity(gradient):
    result = apply_pipeline(gradient, None, PipelineSpec())
    assert np.array_equal(result.sequence.frames, gradient.frames)
    assert len(result.provenance) == 0


def test_region_step_without_masks(gradient):
    spec = PipelineSpec.load(
        {"steps": [{"op": "temporal_sample", "stride": 2}, {"op": "mask_regions"}]}
    )
    with pytest.raises(MissingMasksError, match=r"step 1 \(mask_regions\)"):
        apply_pipeline(gradient, None, spec)


def test_pipeline_runs_in_order(gradient, centre_masks):
    spec = PipelineSpec(steps=(TemporalSample(stride=2, start=1), MaskRegions(fill=255)))
    result = apply_pipeline(gradient, centre_masks, spec)
    assert result.sequence.indices == (1, 3, 5, 7)
    assert (result.sequence.frames[:, 2:4, 2:6] == 255).all()
    assert result.provenance == spec


def test_sampling_and_blur_commute(gradient, centre_masks):
    ts_bl = PipelineSpec(steps=(TemporalSample(stride=3), BlurRegions(sigma=2, radius=2)))
    bl_ts = PipelineSpec(steps=(BlurRegions(sigma=2, radius=2), TemporalSample(stride=3)))
    first = apply_pipeline(gradient, centre_masks, ts_bl).sequence
    second = apply_pipeline(gradient, centre_masks, bl_ts).sequence
    assert np.array_equal(first.frames, second.frames)


def test_downsample_then_mask_follows_masks(gradient, centre_masks):
    spec = PipelineSpec(steps=(Downsample(factor=2), MaskRegions(fill=0)))
    result = apply_pipeline(gradient, centre_masks, spec)
    assert result.sequence.shape == (8, 3, 4)
    assert result.masks.shape == (8, 3, 4)
    assert (result.sequence.frames[:, 1, 1:3] == 0).all()


@pytest.mark.parametrize(
    "document",
    (
        {"steps": [{"op": "rotate"}]},
        {"steps": [{"op": "downsample", "factor": 3}]},
        {"steps": [{"op": "blur_regions", "sigma": 0}]},
        {"steps": [{"op": "temporal_sample", "stride": 2, "every": 1}]},
        {"steps": [{"op": "temporal_sample", "stride": s} for s in (2, 5)]},
        {"steps": [{"op": "background_removal", "threshold": 0}]},
        ["not", "a", "pipeline"],
    ),
)
def test_invalid_pipeline_documents(document):
    with pytest.raises(InvalidPipelineError):
        PipelineSpec.load(document)


def test_pipeline_document_defaults():
    spec = PipelineSpec.load({"steps": [{"op": "blur_regions"}]})
    assert spec.to_document() == {"steps": [{"op": "blur_regions", "sigma": 10.0, "radius": 10}]}
    assert spec.requires_masks


def test_provenance_document_is_a_pipeline():
    spec = PipelineSpec(steps=(TemporalSample(stride=5),))
    provenance = {"input": "frames", "pipeline": spec.to_document()}
    assert PipelineSpec.load(provenance) == spec


def test_load_pipeline_spec_formats(tmp_path):
    (tmp_path / "p.json").write_text(json.dumps({"steps": [{"op": "downsample", "factor": 4}]}))
    (tmp_path / "p.yaml").write_text("steps:\n  - op: downsample\n    factor: 4\n")
    (tmp_path / "bad.json").write_text("{steps: ")

    assert load_pipeline_spec(tmp_path / "p.json") == load_pipeline_spec(tmp_path / "p.yaml")
    with pytest.raises(InvalidPipelineError):
        load_pipeline_spec(tmp_path / "bad.json")


def test_load_pipeline_spec_rejects_non_utf8(tmp_path):
    path = tmp_path / "binary.json"
    path.write_bytes(b"\xff\xfe")
    with pytest.raises(InvalidPipelineError, match="UTF-8"):
        load_pipeline_spec(path)


def test_load_segmentation(tmp_path):
    spec = PipelineSpec(steps=(Downsample(factor=2),))
    segmented = {
        "pipeline": spec.to_document(),
        "segmentation": {"clip_length": 5, "stride": 2, "start": 1},
    }
    (tmp_path / "segmented.json").write_text(json.dumps(segmented))
    (tmp_path / "plain.json").write_text(json.dumps({**segmented, "segmentation": None}))
    (tmp_path / "pipeline.json").write_text(json.dumps(spec.to_document()))
    (tmp_path / "bad.json").write_text(json.dumps({**segmented, "segmentation": {"stride": 2}}))

    assert load_segmentation(tmp_path / "segmented.json") == ClipSegmentation(
        clip_length=5, stride=2, start=1
    )
    assert load_segmentation(tmp_path / "plain.json") is None
    assert load_segmentation(tmp_path / "pipeline.json") is None
    with pytest.raises(InvalidPipelineError):
        load_segmentation(tmp_path / "bad.json")


def test_segment_clips_drops_partial_clip(caplog):
    sequence = constant(25, 2, 2, 0)
    with caplog.at_level(logging.WARNING):
        clips = segment_clips(sequence, None, clip_length=10)
    assert [clip.indices for clip, _ in clips] == [tuple(range(10)), tuple(range(10, 20))]
    assert "dropping 5" in caplog.text


def test_segment_clips_with_stride(gradient, centre_masks):
    clips = segment_clips(gradient, centre_masks, clip_length=2, stride=3, start=1)
    assert [clip.indices for clip, _ in clips] == [(1, 4)]
    assert clips[0][1].t_count == 2


def test_segment_clips_too_short():
    with pytest.raises(SequenceTooShortError):
        segment_clips(constant(5, 2, 2, 0), None, clip_length=10)


def test_settings_grid():
    grid = settings_grid(stride=10, factor=4)
    assert len(grid) == 5 + 5 * 4
    assert [step.op for step in grid["TS->BL"].steps] == ["temporal_sample", "blur_regions"]
    assert grid["TS"].steps[0].stride == 10
    assert grid["DS"].steps[0].factor == 4
    assert "TS->TS" not in grid


@pytest.mark.parametrize("t_count", (1, 2, 7, 31, 64))
def test_sampling_cardinality(t_count):
    for stride in range(1, 17):
        for start in range(t_count):
            expected = -(-(t_count - start) // stride)
            assert len(temporal_sample_indices(t_count, stride, start)) == expected


def test_stride_one_sampling_is_identity(gradient):
    sampled, _ = temporal_sample(gradient, None, stride=1)
    assert np.array_equal(sampled.frames, gradient.frames)
    assert sampled.indices == gradient.indices


def test_masking_is_idempotent(gradient, centre_masks):
    once = mask_regions(gradient, centre_masks)
    twice = mask_regions(once, centre_masks)
    assert np.array_equal(once.frames, twice.frames)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 3))
@settings(max_examples=10, deadline=None)
def test_blur_and_sampling_commute_on_random_clips(seed, stride, start):
    rng = np.random.default_rng(seed)
    frames = FrameSequence.from_array(rng.integers(0, 256, (10, 64, 64, 3), dtype=np.uint8))
    masks = MaskSequence.from_array(rng.integers(0, 2, (10, 64, 64), dtype=np.uint8))
    blur = BlurRegions(sigma=3, radius=4)
    sample = TemporalSample(stride=stride, start=start)

    first = apply_pipeline(frames, masks, PipelineSpec(steps=(sample, blur))).sequence
    second = apply_pipeline(frames, masks, PipelineSpec(steps=(blur, sample))).sequence

    assert np.array_equal(first.frames, second.frames)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_downsampling_twice_by_two_matches_by_four(seed):
    rng = np.random.default_rng(seed)
    frames = FrameSequence.from_array(rng.integers(0, 256, (2, 16, 24, 3), dtype=np.uint8))
    twice = downsample(downsample(frames, 2), 2).frames.astype(int)
    once = downsample(frames, 4).frames.astype(int)
    assert np.abs(twice - once).max() <= 1


def test_static_scene_background_removal_is_all_fill():
    frames = np.repeat(np.arange(48, dtype=np.uint8).reshape(1, 4, 4, 3), 5, axis=0)
    out = background_removal(FrameSequence.from_array(frames), threshold=1, fill=7)
    assert (out.frames == 7).all()
