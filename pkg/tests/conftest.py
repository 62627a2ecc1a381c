import pytest

from framekit import InferenceSession, freeze_world, parse

F1_SOURCE = """\
frame Thing {
  slot size: integer;
  slot big: boolean;
  big := true if size > 10;
  big := false;
  ask size: "Enter size";
}
frame Box : Thing { slot size: integer default 3; }
frame Crate : Thing { slot size: integer default 20; }
"""

F2_SOURCE = """\
frame Gauge {
  slot a: integer default 1;
  slot x: integer;
  x := 5;
  x := 10 if a > 0;
}
"""

F3_SOURCE = """\
frame Sensor {
  slot speed: integer;
  slot alert: boolean default false;
  on speed if speed > 100 { alert := true; }
}
"""

F4_SOURCE = """\
frame Loop {
  slot p: integer;
  slot q: integer;
  p := q + 1;
  q := p + 1;
}
"""

F7_SOURCE = """\
frame Vehicle {
  slot wheels: integer;
  slot kind: string;
  ask wheels: "How many wheels?";
}
frame Bike : Vehicle {
  constraint wheels = 2;
  kind := "bike";
}
frame RacingBike : Bike {
  slot gears: integer;
  constraint gears > 10;
  kind := "racing_bike";
}
frame Car : Vehicle {
  constraint wheels = 4;
  kind := "car";
}
frame Obs : Vehicle {
  slot wheels: integer default 2;
  parent := specialize(Vehicle);
}
frame Obs2 : Vehicle {
  slot wheels: integer default 2;
  slot gears: integer default 15;
  parent := specialize(Vehicle);
}
"""

ANIMAL_SOURCE = """\
frame Animal { slot legs: integer; }
frame Dog : Animal { slot legs: integer default 4; }
frame Bird : Animal { slot legs: integer default 2; }
frame Census {
  slot twolegged: reference;
  twolegged := exists c in Animal where c.legs = 2;
}
"""

WHEELS_CSV = "id,name,wheels\n1,trike,3\n2,car,4\n"


def world_from(source):
    return freeze_world(parse(source))


@pytest.fixture
def f1_world():
    return world_from(F1_SOURCE)


@pytest.fixture
def f2_world():
    return world_from(F2_SOURCE)


@pytest.fixture
def f3_world():
    return world_from(F3_SOURCE)


@pytest.fixture
def f4_world():
    return world_from(F4_SOURCE)


@pytest.fixture
def f7_world():
    return world_from(F7_SOURCE)


@pytest.fixture
def animal_world():
    return world_from(ANIMAL_SOURCE)


@pytest.fixture
def session(request):
    def make(world, **kwargs):
        return InferenceSession(world, **kwargs)

    return make


@pytest.fixture
def wheels_csv(tmp_path):
    path = tmp_path / "wheels.csv"
    path.write_text(WHEELS_CSV, encoding="utf-8")
    return path
