import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepbench.errors import AssetValidationError, InvalidOperatorError, MissingCaptionError, SepbenchError
from sepbench.prompts import (OperatorTemplate, TemplateLibrary, caption_variants, compose_prompt,
                              default_library, join_captions, load_templates)


def _rows(n_extract=50, n_remove=50):
    rows = ["id\toperator\tpattern"]
    rows += [f"{i}\textract\tGet {{captions}} variant {i}." for i in range(n_extract)]
    rows += [f"{100 + i}\tremove\tDrop {{captions}} variant {i}." for i in range(n_remove)]
    return rows


def test_bundled_asset():
    lib = load_templates()
    assert len(lib) == 100
    assert len(lib.for_operator("extract")) == 50 and len(lib.for_operator("remove")) == 50


def test_asset_validation(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("\n".join(_rows()), encoding="utf-8")
    assert len(load_templates(p)) == 100
    p.write_text("\n".join(_rows(n_remove=49)), encoding="utf-8")
    with pytest.raises(AssetValidationError):
        load_templates(p)
    rows = _rows()
    rows[1] = "0\textract\tno placeholder here"
    p.write_text("\n".join(rows), encoding="utf-8")
    with pytest.raises(AssetValidationError):
        load_templates(p)
    rows = _rows()
    rows[2] = rows[2].replace("1\t", "0\t", 1)
    p.write_text("\n".join(rows), encoding="utf-8")
    with pytest.raises(AssetValidationError):
        load_templates(p)


def test_double_placeholder_rejected():
    ts = [OperatorTemplate(0, "extract", "{captions} and {captions}")]
    with pytest.raises(AssetValidationError):
        TemplateLibrary(ts, per_operator=1)


def test_join_captions():
    assert join_captions(["dog barking"]) == "dog barking"
    assert join_captions(["dog barking", "rain"]) == "dog barking and rain"
    assert join_captions(["a", "b", "c"]) == "a, b, and c"
    with pytest.raises(SepbenchError):
        join_captions([])


def test_compose_prompt_examples():
    lib = default_library()
    remove_id = next(t.id for t in lib.for_operator("remove") if t.pattern == "Remove {captions} from the audio.")
    assert compose_prompt("remove", ["rain"], template_id=remove_id).text == "Remove rain from the audio."
    a = compose_prompt("extract", ["a"], rng=np.random.default_rng(3))
    b = compose_prompt("extract", ["a"], rng=np.random.default_rng(3))
    assert a == b
    with pytest.raises(InvalidOperatorError):
        compose_prompt("extract", ["a"], template_id=remove_id)
    with pytest.raises(InvalidOperatorError):
        compose_prompt("mute", ["a"], template_id=0)


def test_operator_disjointness():
    lib = default_library()
    ext = {t.render("X") for t in lib.for_operator("extract")}
    rem = {t.render("X") for t in lib.for_operator("remove")}
    assert len(ext) == 50 and len(rem) == 50 and not ext & rem


def test_template_draw_uniform_chi_square():
    rng = np.random.default_rng(0)
    lib = default_library()
    first = lib.for_operator("remove")[0].id
    counts = np.zeros(50)
    for _ in range(10_000):
        counts[compose_prompt("remove", ["x"], rng=rng).template_id - first] += 1
    chi2 = np.sum((counts - 200.0) ** 2 / 200.0)
    # 99th percentile of chi-square with 49 degrees of freedom
    assert chi2 < 74.92


def test_caption_variants():
    rng = np.random.default_rng(0)
    assert caption_variants({"a": ["only"]}, rng) == {"a": "only"}
    with pytest.raises(MissingCaptionError):
        caption_variants({"a": []}, rng)
    opts = ["short", "a longer caption", "third style"]
    counts = {o: 0 for o in opts}
    for _ in range(10_000):
        counts[caption_variants({"c": opts}, rng)["c"]] += 1
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 3) <= 0.02
    assert caption_variants({"x": opts, "y": opts}, np.random.default_rng(9)) == \
        caption_variants({"y": opts, "x": opts}, np.random.default_rng(9))


_token = st.from_regex(r"Q[A-Z]{3}[0-9]{2}", fullmatch=True)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["extract", "remove"]), st.lists(_token, min_size=1, max_size=5, unique=True),
       st.integers(0, 2 ** 31))
def test_captions_appear_exactly_once(operator, captions, seed):
    spec = compose_prompt(operator, captions, rng=np.random.default_rng(seed))
    assert spec.operator == operator and spec.captions == tuple(captions)
    for c in captions:
        assert spec.text.count(c) == 1
