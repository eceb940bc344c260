"""Cohort manifests and the batch evaluation pipeline."""
from __future__ import annotations

import numpy as np
import pytest

from segqc import pipeline, report, synth
from segqc.calibration import StructureThresholds, ThresholdSet, default_thresholds
from segqc.errors import DataConsistencyError, InputFileError
from segqc.mask_io import LabelMask, write_mask
from segqc.pipeline import EmptyManifestError, PairSpec, evaluate_pairs, read_manifest
from shapes import blob_mask, disk_mask, mask_from


ENDO_ONLY = {"lv_endo": frozenset({1})}


def pair(image_id, pred, ref=None, tags=()):
    return PairSpec(image_id=image_id, pred=pred, ref=ref, tags=tuple(tags))


# ---------------------------------------------------------------------------
# manifest parsing
# ---------------------------------------------------------------------------

def test_manifest_parses_ids_paths_and_tags(tmp_path):
    (tmp_path / "masks").mkdir()
    manifest = tmp_path / "cohort.tsv"
    manifest.write_text(
        "# cohort of two\n"
        "\n"
        "img1\tmasks/p1.mha\tmasks/r1.mha\tED\tAP4C\n"
        "img2\tmasks/p2.mha\t-\n",
        encoding="utf-8",
    )
    pairs = read_manifest(manifest, with_reference=True)
    assert [p.image_id for p in pairs] == ["img1", "img2"]
    assert pairs[0].pred == tmp_path / "masks" / "p1.mha"
    assert pairs[0].ref == tmp_path / "masks" / "r1.mha"
    assert pairs[0].tags == ("ED", "AP4C")
    assert pairs[1].ref is None
    assert pairs[1].tags == ()


def test_manifest_without_reference_column(tmp_path):
    manifest = tmp_path / "cohort.tsv"
    manifest.write_text("img1\tp1.mha\tED\n", encoding="utf-8")
    pairs = read_manifest(manifest, with_reference=False)
    assert pairs[0].ref is None
    assert pairs[0].pred == tmp_path / "p1.mha"
    assert pairs[0].tags == ("ED",)


def test_manifest_rejects_duplicates_blanks_and_emptiness(tmp_path):
    manifest = tmp_path / "cohort.tsv"
    manifest.write_text("img1\tp.mha\tr.mha\nimg1\tq.mha\ts.mha\n", encoding="utf-8")
    with pytest.raises(DataConsistencyError):
        read_manifest(manifest, with_reference=True)

    manifest.write_text("img1\tp.mha\n", encoding="utf-8")
    with pytest.raises(InputFileError):
        read_manifest(manifest, with_reference=True)  # reference column missing

    manifest.write_text("# nothing but comments\n\n", encoding="utf-8")
    with pytest.raises(EmptyManifestError):
        read_manifest(manifest, with_reference=True)

    with pytest.raises(InputFileError):
        read_manifest(tmp_path / "absent.tsv", with_reference=True)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_evaluate_scores_identity_pairs_perfectly():
    mask = blob_mask(1)
    results = evaluate_pairs([pair("a", mask, mask)], ENDO_ONLY, default_thresholds())
    record = results[0].records[0]
    assert record.dice == 1.0
    assert record.mad_mm == 0.0
    assert record.hausdorff_mm == 0.0
    assert not results[0].verdict.anatomical


def test_evaluate_accepts_paths_and_masks(tmp_path):
    mask = disk_mask(20, canvas=64)
    write_mask(mask, tmp_path / "p.mha")
    write_mask(mask, tmp_path / "r.mha")
    results = evaluate_pairs(
        [pair("file", tmp_path / "p.mha", tmp_path / "r.mha"), pair("mem", mask, mask)],
        ENDO_ONLY,
    )
    assert [r.image_id for r in results] == ["file", "mem"]
    assert results[0].records[0].dice == 1.0


def test_evaluate_without_thresholds_keeps_neutral_verdicts():
    # A deliberately implausible shape: classification must not run.
    spiky = synth.generate(
        synth.ShapeSpec("disk", radius=30.0,
                        deformity=synth.Deformity("spike", magnitude=60.0)),
        canvas=(256, 256))
    results = evaluate_pairs([pair("a", spiky)], ENDO_ONLY, thresholds=None)
    assert not results[0].verdict.anatomical
    assert results[0].records[0].simplicity is not None


def test_evaluate_classifies_against_thresholds():
    spiky = synth.generate(
        synth.ShapeSpec("disk", radius=30.0,
                        deformity=synth.Deformity("spike", magnitude=80.0)),
        canvas=(256, 256))
    strict_gate = ThresholdSet({"lv_endo": StructureThresholds(0.99, 0.98)})
    results = evaluate_pairs([pair("a", spiky)], ENDO_ONLY, strict_gate)
    assert results[0].verdict.anatomical


def test_evaluate_rejects_duplicate_ids():
    mask = disk_mask(10, canvas=64)
    with pytest.raises(DataConsistencyError):
        evaluate_pairs([pair("a", mask), pair("a", mask)], ENDO_ONLY)


def test_unreadable_file_is_a_failed_image_when_lenient(tmp_path):
    results = evaluate_pairs([pair("a", tmp_path / "absent.mha")], ENDO_ONLY,
                             default_thresholds())
    assert results[0].error is not None
    assert results[0].records == ()
    assert results[0].verdict.anatomical
    assert results[0].verdict.reasons[0].metric == "evaluation_failure"


def test_unreadable_file_aborts_when_strict(tmp_path):
    with pytest.raises(InputFileError):
        evaluate_pairs([pair("a", tmp_path / "absent.mha")], ENDO_ONLY, strict=True)


def test_grid_mismatch_is_a_failed_image_when_lenient():
    pred = disk_mask(10, canvas=64)
    ref = disk_mask(10, canvas=65)
    results = evaluate_pairs([pair("a", pred, ref)], ENDO_ONLY, default_thresholds())
    assert "pixel grid" in results[0].error
    assert results[0].verdict.anatomical
    with pytest.raises(DataConsistencyError):
        evaluate_pairs([pair("a", pred, ref)], ENDO_ONLY, strict=True)


def test_spacing_mismatch_is_caught():
    pred = disk_mask(10, canvas=64)
    ref = disk_mask(10, canvas=64, spacing=(0.5, 0.5))
    results = evaluate_pairs([pair("a", pred, ref)], ENDO_ONLY)
    assert results[0].error is not None


# ---------------------------------------------------------------------------
# empty-structure policy
# ---------------------------------------------------------------------------

def two_label_mask(with_second: bool):
    arr = np.zeros((48, 48), dtype=np.uint8)
    arr[8:24, 8:24] = 1
    if with_second:
        arr[30:40, 30:40] = 2
    return mask_from(arr)


def test_structure_absent_from_both_masks_is_skipped():
    pred = two_label_mask(False)
    ref = two_label_mask(False)
    structures = {"lv_endo": frozenset({1}), "la": frozenset({2})}
    results = evaluate_pairs([pair("a", pred, ref)], structures, default_thresholds())
    assert [r.structure for r in results[0].records] == ["lv_endo"]
    assert not results[0].verdict.anatomical


def test_missed_structure_is_an_error_record():
    pred = two_label_mask(False)
    ref = two_label_mask(True)
    structures = {"lv_endo": frozenset({1}), "la": frozenset({2})}
    results = evaluate_pairs([pair("a", pred, ref)], structures, default_thresholds())
    by_name = {r.structure: r for r in results[0].records}
    assert by_name["la"].error == "prediction has no pixels"
    assert results[0].verdict.anatomical


def test_hallucinated_structure_is_an_error_record():
    pred = two_label_mask(True)
    ref = two_label_mask(False)
    structures = {"lv_endo": frozenset({1}), "la": frozenset({2})}
    results = evaluate_pairs([pair("a", pred, ref)], structures, default_thresholds())
    by_name = {r.structure: r for r in results[0].records}
    assert by_name["la"].error == "reference has no pixels"


def test_gated_structure_missing_without_reference_is_an_error():
    pred = two_label_mask(False)
    gate = ThresholdSet({"lv_endo": StructureThresholds(0.7, 0.5),
                         "la": StructureThresholds(0.7, 0.5)})
    structures = {"lv_endo": frozenset({1}), "la": frozenset({2})}
    results = evaluate_pairs([pair("a", pred)], structures, gate)
    by_name = {r.structure: r for r in results[0].records}
    assert by_name["la"].error == "prediction has no pixels"
    assert results[0].verdict.anatomical


def test_ungated_structure_missing_without_reference_is_skipped():
    pred = two_label_mask(False)
    structures = {"lv_endo": frozenset({1}), "la": frozenset({2})}
    results = evaluate_pairs([pair("a", pred)], structures, default_thresholds())
    assert [r.structure for r in results[0].records] == ["lv_endo"]


def test_error_records_abort_strict_runs():
    pred = two_label_mask(False)
    ref = two_label_mask(True)
    structures = {"lv_endo": frozenset({1}), "la": frozenset({2})}
    with pytest.raises(DataConsistencyError):
        evaluate_pairs([pair("a", pred, ref)], structures, strict=True)


# ---------------------------------------------------------------------------
# parallelism and ordering
# ---------------------------------------------------------------------------

def test_results_are_sorted_by_image_id_at_any_parallelism():
    pairs = [pair(f"img{n:02d}", blob_mask(n), blob_mask(n + 50)) for n in range(12)]
    shuffled = list(reversed(pairs))
    serial = evaluate_pairs(shuffled, ENDO_ONLY, default_thresholds(), jobs=1)
    threaded = evaluate_pairs(shuffled, ENDO_ONLY, default_thresholds(), jobs=4)
    assert [r.image_id for r in serial] == sorted(p.image_id for p in pairs)
    assert report.records_to_json(serial) == report.records_to_json(threaded)
    assert serial == threaded


def test_job_count_is_validated():
    with pytest.raises(ValueError):
        evaluate_pairs([pair("a", disk_mask(5, canvas=32))], ENDO_ONLY, jobs=0)


def test_default_structure_map_is_used_when_unspecified():
    arr = np.zeros((64, 64), dtype=np.uint8)
    arr[10:30, 10:30] = 1
    arr[30:50, 10:30] = 2
    arr[10:30, 40:55] = 3
    mask = mask_from(arr)
    results = evaluate_pairs([pair("a", mask, mask)])
    names = [r.structure for r in results[0].records]
    assert names == ["lv_endo", "lv_epi", "la"]
    assert pipeline.DEFAULT_STRUCTURES["lv_epi"] == frozenset({1, 2})


def test_empty_structure_map_is_rejected():
    with pytest.raises(ValueError):
        evaluate_pairs([pair("a", disk_mask(5, canvas=32))], {})
