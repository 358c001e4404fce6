"""Bundled meta graph and scale presets."""
from __future__ import annotations

import json
from importlib import resources

from .graph import GraphScaleConfig, MetaGraph

DESK_SCALE = GraphScaleConfig(
    nodes={
        "person": 60, "company": 12, "school": 6, "city": 15, "birth_date": 30,
        "salary": 20, "height": 20, "hobby": 15, "occupation": 15, "food": 12,
        "car_brand": 10, "year": 10, "industry": 8,
    },
    edges={
        "person_person": 70, "person_company": 20, "company_person": 10,
        "person_school": 10, "school_person": 4, "person_city": 30,
        "person_birth_date": 12, "person_salary": 10, "person_height": 6,
        "person_hobby": 8, "person_occupation": 8, "person_food": 6,
        "person_car": 6, "company_city": 6, "company_year": 6,
        "company_industry": 5, "school_city": 4, "salary_salary": 12,
        "year_year": 6,
    },
)

# Node total 5,902 and 13,097 statement-bearing edges per user.
FULL_SCALE = GraphScaleConfig(
    nodes={
        "person": 1600, "company": 30, "school": 12, "city": 600, "birth_date": 900,
        "salary": 600, "height": 500, "hobby": 400, "occupation": 400, "food": 300,
        "car_brand": 200, "year": 200, "industry": 160,
    },
    edges={
        "person_person": 5600, "person_company": 1600, "company_person": 40,
        "person_school": 800, "school_person": 10, "person_city": 2400,
        "person_birth_date": 500, "person_salary": 400, "person_height": 300,
        "person_hobby": 400, "person_occupation": 400, "person_food": 300,
        "person_car": 300, "company_city": 15, "company_year": 15,
        "company_industry": 11, "school_city": 6, "salary_salary": 12000,
        "year_year": 8000,
    },
)

SCALES = {"desk": DESK_SCALE, "full": FULL_SCALE}


def default_meta() -> MetaGraph:
    raw = json.loads(resources.files("mprbench").joinpath("data/default_meta.json").read_text("utf-8"))
    return MetaGraph.from_config(raw)
