"""Shared test fixtures and factories."""
from hemanet.records import CbcRecord, Gender


def make_record(**overrides) -> CbcRecord:
    base = dict(
        age=40, gender=Gender.FEMALE, rbc=4.5, hgb=13.5, hct=40.0,
        mcv=90.0, mch=30.0, mchc=34.0, wbc=7.0,
    )
    base.update(overrides)
    return CbcRecord(**base)
