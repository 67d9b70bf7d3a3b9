#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_destroy_path0_null_is_ignored(void)
{
    struct dlist *l = NULL;
    dlist_destroy(l);
    TEST_ASSERT_NULL(l);
}
