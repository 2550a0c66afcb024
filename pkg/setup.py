#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""The setup script."""

from setuptools import setup, find_packages

with open('README.md') as readme_file:
    readme = readme_file.read()

setup_requirements = ['pytest-runner']

setup(
    author="hspn developers",
    classifiers=[
        'Development Status :: 2 - Pre-Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3.9',
    ],
    description="Hierarchical shape perception: completed 3D point clouds from incomplete 2D slice images.",
    entry_points={
        "console_scripts": ['hspn = hspn.run:main']
    },
    install_requires=[], # dependencies managed via conda for the moment
    license="MIT license",
    long_description=readme,
    long_description_content_type='text/markdown',
    include_package_data=True,
    keywords='point cloud completion, tree gcn, wgan-gp',
    name='hspn',
    packages=find_packages(include=['hspn', 'hspn.*']),
    setup_requires=setup_requirements,
    test_suite='tests',
    tests_require=[],
    version='0.1.0',
    zip_safe=False,
)
