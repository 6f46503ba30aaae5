import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgteam.assembly import (
    DEFAULT_TEMPLATE,
    AssetBundle,
    MuxInputs,
    MuxTemplate,
    Padding,
    attach_music,
    build_timeline,
    emit_subtitles,
    format_timestamp,
    parse_srt,
    parse_timestamp,
    plan_mux,
    subtitle_cues,
)
from vgteam.backends.base import MediaAsset, MediaKind
from vgteam.backends.media import placeholder_png, placeholder_wav
from vgteam.errors import AssemblyError, MissingAsset, TemplateError
from vgteam.roles import Scene, SceneSet


def _bundle(durations, music=None):
    images = tuple(MediaAsset.create(MediaKind.IMAGE, placeholder_png(f"i{i}".encode())) for i in range(len(durations)))
    narrations = tuple(
        MediaAsset.create(MediaKind.NARRATION, placeholder_wav(f"n{i}".encode(), round(d * 1000)), d)
        for i, d in enumerate(durations)
    )
    music_asset = None
    if music is not None:
        music_asset = MediaAsset.create(MediaKind.MUSIC, placeholder_wav(b"m", round(music * 1000)), music)
    return AssetBundle(images, narrations, music_asset)


def _scenes(n):
    return SceneSet(tuple(Scene(i, f"Caption {i}", f"narration {i}") for i in range(1, n + 1)))


def test_two_scene_golden_timeline():
    timeline = build_timeline(_scenes(2), _bundle([3.2, 4.0]))
    assert [(s.start, s.end) for s in timeline.slides] == [(0.0, 4.2), (4.2, 9.2)]
    assert timeline.total_duration == 9.2
    assert timeline.fade_out == 1.0
    assert emit_subtitles(timeline) == (
        "1\n00:00:00,500 --> 00:00:03,700\nCaption 1\n\n"
        "2\n00:00:04,700 --> 00:00:08,700\nCaption 2\n\n"
    )


def test_cue_crossing_a_minute_boundary():
    timeline = build_timeline(_scenes(2), _bundle([59.0, 2.0]))
    srt = emit_subtitles(timeline)
    assert "00:01:00,500 --> 00:01:02,500" in srt
    assert parse_timestamp("00:01:00,500") == 60_500


@pytest.mark.parametrize(
    "ms,text",
    [(0, "00:00:00,000"), (3_599_999, "00:59:59,999"), (3_600_000, "01:00:00,000"), (360_000_000, "100:00:00,000")],
)
def test_timestamp_examples(ms, text):
    assert format_timestamp(ms) == text
    assert parse_timestamp(text) == ms


@pytest.mark.parametrize("bad", ["0:00:00,000", "00:60:00,000", "00:00:00.000", "00:00:00,00"])
def test_bad_timestamps(bad):
    with pytest.raises(ValueError):
        parse_timestamp(bad)


def test_fade_is_capped_at_half_the_timeline():
    timeline = build_timeline(_scenes(1), _bundle([0.2]), Padding(0, 0), fade_out=5.0)
    assert timeline.fade_out_ms == 100


def test_missing_narration():
    bundle = _bundle([1.0])
    with pytest.raises(MissingAsset, match="scene 2"):
        build_timeline(_scenes(2), AssetBundle(bundle.images * 2, bundle.narrations))


def test_short_music_is_rejected():
    timeline = build_timeline(_scenes(2), _bundle([3.2, 4.0]))
    short = _bundle([], music=9.1).music
    with pytest.raises(AssemblyError, match="9.100 s.*9.200 s"):
        attach_music(timeline, short)
    assert attach_music(timeline, short, strict=False).music == short.digest
    exact = _bundle([], music=9.2).music
    assert attach_music(timeline, exact).music == exact.digest


DURATIONS = st.lists(st.integers(1, 120_000).map(lambda ms: ms / 1000), min_size=1, max_size=12)
PADDING = st.builds(Padding, st.integers(0, 2000).map(lambda ms: ms / 1000), st.integers(0, 2000).map(lambda ms: ms / 1000))


@settings(max_examples=1000, deadline=None)
@given(DURATIONS, PADDING)
def test_timeline_conservation_and_cue_containment(durations, padding):
    timeline = build_timeline(_scenes(len(durations)), _bundle(durations), padding)
    expected = sum(round(d * 1000) for d in durations) + len(durations) * (
        round(padding.lead * 1000) + round(padding.tail * 1000)
    )
    assert timeline.total_ms == expected
    cues = subtitle_cues(timeline)
    for slide, cue in zip(timeline.slides, cues):
        assert slide.start_ms <= cue.start_ms < cue.end_ms <= slide.end_ms
    for a, b in zip(cues, cues[1:]):
        assert a.end_ms <= b.start_ms
    assert parse_srt(emit_subtitles(timeline)) == cues


def _plan(timeline, **kwargs):
    n = len(timeline.slides)
    inputs = MuxInputs(tuple(f"assets/image_{i:02d}.png" for i in range(1, n + 1)), "assets/music.wav", "subtitles.srt")
    return plan_mux(timeline, inputs, "video.mp4", **kwargs)


def test_default_plan_argv():
    timeline = build_timeline(_scenes(2), _bundle([3.2, 4.0]))
    plan = _plan(timeline)
    argv = list(plan.argv)
    assert argv[:3] == ["ffmpeg", "-y", "-hide_banner"]
    assert argv[3:11] == ["-loop", "1", "-framerate", "25", "-t", "4.200", "-i", "assets/image_01.png"]
    assert argv[11:19] == ["-loop", "1", "-framerate", "25", "-t", "5.000", "-i", "assets/image_02.png"]
    assert "afade=t=out:st=8.200:d=1.000" in argv
    assert "concat=n=2:v=1:a=0,format=yuv420p[v]" in argv
    assert argv[-3:] == ["-t", "9.200", "video.mp4"]
    assert plan.inputs == ("assets/image_01.png", "assets/image_02.png", "assets/music.wav", "subtitles.srt")


def test_plan_paths_with_spaces_stay_one_argument():
    timeline = build_timeline(_scenes(1), _bundle([1.0]))
    plan = plan_mux(timeline, MuxInputs(("my images/a b.png",), "m.wav", "s.srt"), "out video.mp4")
    assert "my images/a b.png" in plan.argv and plan.argv[-1] == "out video.mp4"


def test_plan_rejects_unknown_placeholder():
    timeline = build_timeline(_scenes(1), _bundle([1.0]))
    with pytest.raises(TemplateError, match="bogus"):
        _plan(timeline, template=MuxTemplate("t", "enc {inputs} {bogus}"))
    with pytest.raises(TemplateError):
        _plan(timeline, template=MuxTemplate("t", "enc {inputs", ""))
    with pytest.raises(TemplateError, match="input_args"):
        _plan(timeline, template=MuxTemplate("t", "enc {inputs}", "-i {file}"))


def test_plan_requires_existing_assets(tmp_path):
    timeline = build_timeline(_scenes(1), _bundle([1.0]))
    with pytest.raises(MissingAsset, match="image_01"):
        _plan(timeline, base_dir=tmp_path)
    with pytest.raises(MissingAsset):
        plan_mux(timeline, MuxInputs((), "m.wav", "s.srt"), "v.mp4")


def test_template_without_input_group():
    timeline = build_timeline(_scenes(2), _bundle([1.0, 2.0]))
    plan = _plan(timeline, template=MuxTemplate("list", "enc {inputs} --durations {durations} {output}"))
    assert plan.argv == ("enc", "assets/image_01.png", "assets/image_02.png", "--durations", "2.000", "3.000", "video.mp4")
    assert DEFAULT_TEMPLATE.name == "ffmpeg-slideshow"
