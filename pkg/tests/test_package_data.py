from importlib import resources
import unittest

from isoradial_heat.constants import SHIPPED_CONFIGS


class PackageDataTests(unittest.TestCase):
    def test_shipped_configs_are_available_as_resources(self) -> None:
        configs_dir = resources.files("isoradial_heat").joinpath("configs")
        for file_name in SHIPPED_CONFIGS:
            resource = configs_dir.joinpath(file_name)
            self.assertTrue(resource.is_file(), f"Missing packaged config resource: {file_name}")
            self.assertIn("schema_version: 1", resource.read_text(encoding="utf-8"))


if __name__ == "__main__":
    unittest.main()
