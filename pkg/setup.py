# -*- coding: utf-8 -*-
from setuptools import setup

setup(
    name='CapaBoost',
    version='0.1.0',
    packages=['capaboost'],
    package_dir={'capaboost': 'python/capaboost'},
    scripts=[
        'bin/capaboost_capaboostpy_run.py',
    ],
    install_requires=[
        'numpy',
    ],
    extras_require={
        'color': ['logutils'],
    },
    license='Apache License, Version 2.0',
    long_description=open('README.md').read(),
)
